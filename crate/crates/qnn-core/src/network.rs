//! Rescaling activations and the feedforward function of a quiver neural
//! network.
//!
//! Every activation here sends `v` to `lambda(v) * v` for a scalar factor
//! `lambda`; the radial variants (`StepRelu`, `Squashing`, `ShiftedRelu`,
//! `Identity`) depend only on `|v|` and therefore commute with orthogonal
//! transformations.

use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;
use crate::quiver::{DimensionVector, NeuralQuiver, VertexId};

/// How close a conjugating matrix must be to orthogonal.
pub const ORTHOGONALITY_TOL: f64 = 1e-12;
/// How close `C * B` must be to the identity for a basis-changed activation.
const LEFT_INVERSE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NetworkError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("weight for edge {edge} must be {expected_rows}x{expected_cols}, got {rows}x{cols}")]
    WeightShape {
        edge: usize,
        expected_rows: usize,
        expected_cols: usize,
        rows: usize,
        cols: usize,
    },
    #[error("expected {expected} weight matrices, got {got}")]
    WeightCount { expected: usize, got: usize },
    #[error("expected one activation per vertex ({expected}), got {got}")]
    ActivationCount { expected: usize, got: usize },
    #[error("activation at source vertex {0} must be the identity")]
    SourceActivation(VertexId),
    #[error("activation at vertex {vertex} acts on dimension {expected}, vertex has width {got}")]
    ActivationDimension {
        vertex: VertexId,
        expected: usize,
        got: usize,
    },
    #[error("conjugating matrix at vertex {vertex} is not orthogonal (defect {defect:.3e})")]
    NotOrthogonal { vertex: VertexId, defect: f64 },
    #[error("basis maps at vertex {vertex} do not satisfy C*B = I (defect {defect:.3e})")]
    NotLeftInverse { vertex: VertexId, defect: f64 },
    #[error("weight for edge {0} contains non-finite entries")]
    NonFiniteWeight(usize),
}

/// A rescaling activation `v -> lambda(v) * v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    /// `lambda = 1`.
    Identity,
    /// `lambda = 0` below unit norm, `1` at or above it (radial).
    StepRelu,
    /// `h(r) = r^2 / (r^2 + 1)`, i.e. `lambda(v) = |v| / (|v|^2 + 1)` (radial).
    Squashing,
    /// `h(r) = relu(r - shift)` (radial).
    ShiftedRelu { shift: f64 },
    /// `lambda(v) = |v - center|`; non-radial unless `center = 0`.
    ShiftedNorm { center: Vec<f64> },
    /// `proj . q^-1 . base . q . inc` for an orthogonal `q`: the
    /// compressed form of a non-radial activation.
    Conjugated {
        base: Box<Activation>,
        q: Matrix,
        inner_dim: usize,
    },
    /// `left_inverse . base . basis` for an injective (not necessarily
    /// orthogonal) basis: produced by the change-of-basis compression.
    BasisChanged {
        base: Box<Activation>,
        basis: Matrix,
        left_inverse: Matrix,
    },
}

fn vec_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl Activation {
    /// The dimension this activation is pinned to, if any. Radial variants
    /// act at every width.
    pub fn fixed_dim(&self) -> Option<usize> {
        match self {
            Activation::Identity
            | Activation::StepRelu
            | Activation::Squashing
            | Activation::ShiftedRelu { .. } => None,
            Activation::ShiftedNorm { center } => Some(center.len()),
            Activation::Conjugated { inner_dim, .. } => Some(*inner_dim),
            Activation::BasisChanged { left_inverse, .. } => Some(left_inverse.rows()),
        }
    }

    /// True if the rescaling factor depends only on `|v|`.
    pub fn is_radial(&self) -> bool {
        match self {
            Activation::Identity
            | Activation::StepRelu
            | Activation::Squashing
            | Activation::ShiftedRelu { .. } => true,
            Activation::ShiftedNorm { center } => center.iter().all(|&x| x == 0.0),
            Activation::Conjugated { base, .. } => base.is_radial(),
            // The basis is injective but generally not isometric, so the
            // factor sees |B x|, not |x|.
            Activation::BasisChanged { .. } => false,
        }
    }

    /// The variant a radial activation restricts to at width `dim`
    /// (conjugating by an orthogonal matrix leaves radial activations
    /// unchanged). Panics if the activation is not radial.
    pub fn radial_restriction(&self, dim: usize) -> Activation {
        assert!(
            self.is_radial(),
            "radial_restriction on a non-radial activation"
        );
        match self {
            Activation::ShiftedNorm { .. } => Activation::ShiftedNorm {
                center: vec![0.0; dim],
            },
            Activation::Conjugated { base, .. } => base.radial_restriction(dim),
            other => other.clone(),
        }
    }

    fn check_dim(&self, got: usize) -> Result<(), NetworkError> {
        match self.fixed_dim() {
            Some(expected) if expected != got => {
                Err(NetworkError::DimensionMismatch { expected, got })
            }
            _ => Ok(()),
        }
    }

    /// `rho(v) = lambda(v) * v`. The factor form keeps rescaling exact:
    /// zero coordinates of `v` stay exactly zero. For the conjugated and
    /// basis-changed variants this equals the literal sandwich
    /// composition (their factor transfers through the embedding), which
    /// the test suite checks independently.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>, NetworkError> {
        let lambda = self.rescaling_factor(v)?;
        Ok(v.iter().map(|x| lambda * x).collect())
    }

    /// The rescaling factor `lambda(v)`. By convention `lambda(0) = 0` for
    /// the norm-based variants (the output is 0 either way).
    pub fn rescaling_factor(&self, v: &[f64]) -> Result<f64, NetworkError> {
        self.check_dim(v.len())?;
        match self {
            Activation::Identity => Ok(1.0),
            Activation::StepRelu => Ok(if vec_norm(v) >= 1.0 { 1.0 } else { 0.0 }),
            Activation::Squashing => {
                let r = vec_norm(v);
                Ok(r / (r * r + 1.0))
            }
            Activation::ShiftedRelu { shift } => {
                let r = vec_norm(v);
                if r == 0.0 {
                    Ok(0.0)
                } else {
                    Ok((r - shift).max(0.0) / r)
                }
            }
            Activation::ShiftedNorm { center } => Ok(v
                .iter()
                .zip(center)
                .map(|(a, c)| (a - c) * (a - c))
                .sum::<f64>()
                .sqrt()),
            Activation::Conjugated { base, q, inner_dim } => {
                // lambda_base(q . inc . v): the factor transfers through the
                // orthogonal conjugation.
                let embed = q.block(0, q.rows(), 0, *inner_dim);
                base.rescaling_factor(&embed.matvec(v))
            }
            Activation::BasisChanged { base, basis, .. } => base.rescaling_factor(&basis.matvec(v)),
        }
    }

    /// Analytic Jacobian of `rho` at `v`. For `rho(v) = g(|v|) v` this is
    /// `g(|v|) I + (g'(|v|)/|v|) v v^T`; the step-like variants use the
    /// locally-constant-factor convention at their kinks, and the
    /// norm-based variants return the zero matrix at `v = 0`.
    pub fn jacobian(&self, v: &[f64]) -> Result<Matrix, NetworkError> {
        self.check_dim(v.len())?;
        let d = v.len();
        match self {
            Activation::Identity => Ok(Matrix::identity(d)),
            Activation::StepRelu => {
                let lambda = self.rescaling_factor(v)?;
                Ok(Matrix::identity(d).scale(lambda))
            }
            Activation::Squashing => {
                let r = vec_norm(v);
                if r == 0.0 {
                    return Ok(Matrix::zeros(d, d));
                }
                let g = r / (r * r + 1.0);
                let gp = (1.0 - r * r) / ((1.0 + r * r) * (1.0 + r * r));
                Ok(rank_one_radial_jacobian(v, g, gp / r))
            }
            Activation::ShiftedRelu { shift } => {
                let r = vec_norm(v);
                if r == 0.0 || r <= *shift {
                    return Ok(Matrix::zeros(d, d));
                }
                let g = 1.0 - shift / r;
                let gp = shift / (r * r);
                Ok(rank_one_radial_jacobian(v, g, gp / r))
            }
            Activation::ShiftedNorm { center } => {
                let diff: Vec<f64> = v.iter().zip(center).map(|(a, c)| a - c).collect();
                let nd = vec_norm(&diff);
                if nd == 0.0 {
                    return Ok(Matrix::zeros(d, d));
                }
                // d/dv [|v - c| v] = |v - c| I + v (v - c)^T / |v - c|
                let mut j = Matrix::identity(d).scale(nd);
                for i in 0..d {
                    for k in 0..d {
                        j[(i, k)] += v[i] * diff[k] / nd;
                    }
                }
                Ok(j)
            }
            Activation::Conjugated { base, q, inner_dim } => {
                let embed = q.block(0, q.rows(), 0, *inner_dim);
                let inner = base.jacobian(&embed.matvec(v))?;
                Ok(embed.transpose().matmul(&inner).matmul(&embed))
            }
            Activation::BasisChanged {
                base,
                basis,
                left_inverse,
            } => {
                let inner = base.jacobian(&basis.matvec(v))?;
                Ok(left_inverse.matmul(&inner).matmul(basis))
            }
        }
    }
}

fn rank_one_radial_jacobian(v: &[f64], diag: f64, outer: f64) -> Matrix {
    let d = v.len();
    let mut j = Matrix::identity(d).scale(diag);
    for i in 0..d {
        for k in 0..d {
            j[(i, k)] += outer * v[i] * v[k];
        }
    }
    j
}

/// Per-vertex feature vectors produced by one feedforward evaluation.
#[derive(Debug, Clone)]
pub struct FeatureAssignment {
    features: Vec<Vec<f64>>,
}

impl FeatureAssignment {
    pub fn feature(&self, v: VertexId) -> &[f64] {
        &self.features[v.0]
    }
}

/// Forward evaluation with the pre-activation sums kept around (needed by
/// backpropagation).
pub(crate) struct ForwardTrace {
    pub features: Vec<Vec<f64>>,
    /// Empty at source vertices.
    pub preactivations: Vec<Vec<f64>>,
}

/// Evaluates the recursive feedforward assignment for weights that may not
/// live inside a network value (gradient descent iterates them).
pub(crate) fn forward_trace(
    quiver: &NeuralQuiver,
    dims: &DimensionVector,
    weights: &[Matrix],
    activations: &[Activation],
    x: &[f64],
) -> Result<ForwardTrace, NetworkError> {
    let class = quiver.classify();
    let d_in = dims.total(&class.inputs);
    if x.len() != d_in {
        return Err(NetworkError::DimensionMismatch {
            expected: d_in,
            got: x.len(),
        });
    }

    let n = quiver.vertex_count();
    let mut features: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut preacts: Vec<Vec<f64>> = vec![Vec::new(); n];

    let mut offset = 0;
    for &v in &class.inputs {
        let w = dims.get(v);
        features[v.0] = x[offset..offset + w].to_vec();
        offset += w;
    }
    features[class.bias.0] = vec![1.0];

    for v in quiver.topological_order() {
        if quiver.is_source(v) {
            continue;
        }
        let mut z = vec![0.0; dims.get(v)];
        for &e in quiver.incoming_edges(v) {
            let edge = quiver.edges()[e];
            let contribution = weights[e].matvec(&features[edge.source.0]);
            for (zi, ci) in z.iter_mut().zip(contribution) {
                *zi += ci;
            }
        }
        features[v.0] = activations[v.0].apply(&z)?;
        preacts[v.0] = z;
    }

    Ok(ForwardTrace {
        features,
        preactivations: preacts,
    })
}

/// A quiver neural network: dimension vector, one weight matrix per edge,
/// one activation per vertex (identity at sources).
#[derive(Debug, Clone, PartialEq)]
pub struct QuiverNetwork {
    quiver: NeuralQuiver,
    dims: DimensionVector,
    weights: Vec<Matrix>,
    activations: Vec<Activation>,
}

impl QuiverNetwork {
    pub fn new(
        quiver: NeuralQuiver,
        dims: DimensionVector,
        weights: Vec<Matrix>,
        activations: Vec<Activation>,
    ) -> Result<Self, NetworkError> {
        if weights.len() != quiver.edge_count() {
            return Err(NetworkError::WeightCount {
                expected: quiver.edge_count(),
                got: weights.len(),
            });
        }
        if activations.len() != quiver.vertex_count() {
            return Err(NetworkError::ActivationCount {
                expected: quiver.vertex_count(),
                got: activations.len(),
            });
        }
        for e in quiver.edges() {
            let w = &weights[e.edge_id];
            let (er, ec) = (dims.get(e.target), dims.get(e.source));
            if w.rows() != er || w.cols() != ec {
                return Err(NetworkError::WeightShape {
                    edge: e.edge_id,
                    expected_rows: er,
                    expected_cols: ec,
                    rows: w.rows(),
                    cols: w.cols(),
                });
            }
            if !w.is_finite() {
                return Err(NetworkError::NonFiniteWeight(e.edge_id));
            }
        }
        for v in quiver.vertices() {
            let a = &activations[v.0];
            if quiver.is_source(v) {
                if *a != Activation::Identity {
                    return Err(NetworkError::SourceActivation(v));
                }
                continue;
            }
            if let Some(expected) = a.fixed_dim() {
                if expected != dims.get(v) {
                    return Err(NetworkError::ActivationDimension {
                        vertex: v,
                        expected,
                        got: dims.get(v),
                    });
                }
            }
            match a {
                Activation::Conjugated { q, inner_dim, .. } => {
                    let defect = q.orthogonality_defect();
                    if q.rows() != q.cols() || defect > ORTHOGONALITY_TOL {
                        return Err(NetworkError::NotOrthogonal { vertex: v, defect });
                    }
                    if *inner_dim > q.rows() {
                        return Err(NetworkError::ActivationDimension {
                            vertex: v,
                            expected: q.rows(),
                            got: *inner_dim,
                        });
                    }
                }
                Activation::BasisChanged {
                    basis,
                    left_inverse,
                    ..
                } => {
                    if basis.rows() != left_inverse.cols() || basis.cols() != left_inverse.rows() {
                        return Err(NetworkError::DimensionMismatch {
                            expected: basis.rows(),
                            got: left_inverse.cols(),
                        });
                    }
                    let defect = left_inverse
                        .matmul(basis)
                        .max_abs_diff(&Matrix::identity(basis.cols()));
                    if defect > LEFT_INVERSE_TOL {
                        return Err(NetworkError::NotLeftInverse { vertex: v, defect });
                    }
                }
                _ => {}
            }
        }
        Ok(Self {
            quiver,
            dims,
            weights,
            activations,
        })
    }

    pub fn quiver(&self) -> &NeuralQuiver {
        &self.quiver
    }

    pub fn dims(&self) -> &DimensionVector {
        &self.dims
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn input_dim(&self) -> usize {
        self.dims.total(&self.quiver.classify().inputs)
    }

    pub fn output_dim(&self) -> usize {
        self.dims.total(&self.quiver.classify().outputs)
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.iter().map(|w| w.rows() * w.cols()).sum()
    }

    /// Evaluates the network on `x` (input vertices concatenated by
    /// ascending id) and returns the output (output vertices concatenated
    /// by ascending id) together with all per-vertex features.
    pub fn feedforward(&self, x: &[f64]) -> Result<(Vec<f64>, FeatureAssignment), NetworkError> {
        let trace = forward_trace(
            &self.quiver,
            &self.dims,
            &self.weights,
            &self.activations,
            x,
        )?;
        let class = self.quiver.classify();
        let mut out = Vec::with_capacity(self.dims.total(&class.outputs));
        for &v in &class.outputs {
            out.extend_from_slice(&trace.features[v.0]);
        }
        Ok((
            out,
            FeatureAssignment {
                features: trace.features,
            },
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step_relu_edge_net() -> QuiverNetwork {
        // a -> b with identity weights, bias -> b with zero weight,
        // StepRelu at b. ids: a=0, b=1, bias=2.
        let q = NeuralQuiver::new(3, &[(0, 1), (2, 1)], 2).unwrap();
        let dims = DimensionVector::new(&q, vec![2, 2, 1]).unwrap();
        let weights = vec![Matrix::identity(2), Matrix::zeros(2, 1)];
        let acts = vec![
            Activation::Identity,
            Activation::StepRelu,
            Activation::Identity,
        ];
        QuiverNetwork::new(q, dims, weights, acts).unwrap()
    }

    #[test]
    fn step_relu_zeroes_small_vectors() {
        let a = Activation::StepRelu;
        assert_eq!(a.apply(&[0.3, 0.4]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(a.apply(&[3.0, 4.0]).unwrap(), vec![3.0, 4.0]);
        // |v| = 1 is inclusive.
        assert_eq!(a.apply(&[1.0, 0.0]).unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn squashing_at_unit_norm() {
        let a = Activation::Squashing;
        assert_eq!(a.apply(&[1.0, 0.0]).unwrap(), vec![0.5, 0.0]);
        assert_eq!(a.rescaling_factor(&[1.0, 0.0]).unwrap(), 0.5);
    }

    #[test]
    fn step_relu_factor() {
        let a = Activation::StepRelu;
        assert_eq!(a.rescaling_factor(&[2.0, 0.0]).unwrap(), 1.0);
        assert_eq!(a.rescaling_factor(&[0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn identity_applies() {
        let v = vec![1.0, -2.0, 3.0];
        assert_eq!(Activation::Identity.apply(&v).unwrap(), v);
    }

    #[test]
    fn step_relu_jacobian_is_scaled_identity() {
        let a = Activation::StepRelu;
        let j = a.jacobian(&[2.0, 0.0]).unwrap();
        assert_eq!(j, Matrix::identity(2));
        let j = a.jacobian(&[0.3, 0.4]).unwrap();
        assert_eq!(j, Matrix::zeros(2, 2));
    }

    #[test]
    fn conjugated_factor_matches_base_for_radial() {
        // Orthogonal 2x2 rotation; StepRelu conjugated by it keeps the
        // norm-based factor.
        let c = 0.6f64;
        let s = 0.8f64;
        let q = Matrix::from_rows(&[&[c, -s], &[s, c]]);
        let a = Activation::Conjugated {
            base: Box::new(Activation::StepRelu),
            q,
            inner_dim: 2,
        };
        assert_eq!(a.rescaling_factor(&[3.0, 4.0]).unwrap(), 1.0);
        assert_eq!(a.rescaling_factor(&[0.1, 0.2]).unwrap(), 0.0);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let a = Activation::ShiftedNorm {
            center: vec![1.0, 2.0],
        };
        assert!(matches!(
            a.apply(&[1.0]),
            Err(NetworkError::DimensionMismatch {
                expected: 2,
                got: 1
            })
        ));
    }

    #[test]
    fn feedforward_thresholds_input() {
        let net = step_relu_edge_net();
        let (y, _) = net.feedforward(&[0.3, 0.4]).unwrap();
        assert_eq!(y, vec![0.0, 0.0]);
        let (y, _) = net.feedforward(&[3.0, 4.0]).unwrap();
        assert_eq!(y, vec![3.0, 4.0]);
    }

    #[test]
    fn feedforward_rejects_bad_input_length() {
        let net = step_relu_edge_net();
        assert!(matches!(
            net.feedforward(&[1.0]),
            Err(NetworkError::DimensionMismatch {
                expected: 2,
                got: 1
            })
        ));
    }

    #[test]
    fn network_validates_weight_shapes() {
        let q = NeuralQuiver::new(3, &[(0, 1), (2, 1)], 2).unwrap();
        let dims = DimensionVector::new(&q, vec![2, 2, 1]).unwrap();
        let weights = vec![Matrix::identity(2), Matrix::zeros(1, 1)];
        let acts = vec![
            Activation::Identity,
            Activation::StepRelu,
            Activation::Identity,
        ];
        assert!(matches!(
            QuiverNetwork::new(q, dims, weights, acts),
            Err(NetworkError::WeightShape { edge: 1, .. })
        ));
    }

    #[test]
    fn radial_restriction_keeps_variant() {
        assert_eq!(
            Activation::StepRelu.radial_restriction(3),
            Activation::StepRelu
        );
        let q = Matrix::identity(4);
        let wrapped = Activation::Conjugated {
            base: Box::new(Activation::Squashing),
            q,
            inner_dim: 3,
        };
        assert_eq!(wrapped.radial_restriction(2), Activation::Squashing);
    }
}
