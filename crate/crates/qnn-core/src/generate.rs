//! Built-in benchmark quivers and seeded random model generation.
//!
//! Randomness is pinned: weights are drawn first (edges in ascending id,
//! entries row-major), then activation parameters (non-source vertices in
//! ascending id), all from uniform `[0, 1)` on one generator stream.

use crate::linalg::Matrix;
use crate::network::{Activation, NetworkError, QuiverNetwork};
use crate::optim::{Batch, OptimError};
use crate::quiver::{DimensionError, DimensionVector, NeuralQuiver, QuiverError};
use crate::rng::Xoshiro256PlusPlus;

/// The three benchmark quivers used throughout the verification suite
/// (named after the CLI preset flags).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuiverPreset {
    /// Chain with a skip connection: a -> b -> c -> d plus a -> c, bias
    /// feeding b, c, d. Default widths (2, 4, 8, 2).
    Fig6Left,
    /// Two inputs fanning into one hidden vertex with two outputs:
    /// a -> c <- b, c -> d, c -> e, bias feeding c, d, e. Default widths
    /// (1, 2, 8, 2, 6).
    Fig6Middle,
    /// Diamond into a chain: a -> b -> d, a -> c -> d, d -> e, bias
    /// feeding b, c, d, e. Default widths (2, 4, 4, 8, 2).
    Fig6Right,
}

impl QuiverPreset {
    pub const ALL: [QuiverPreset; 3] = [
        QuiverPreset::Fig6Left,
        QuiverPreset::Fig6Middle,
        QuiverPreset::Fig6Right,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            QuiverPreset::Fig6Left => "fig6-left",
            QuiverPreset::Fig6Middle => "fig6-middle",
            QuiverPreset::Fig6Right => "fig6-right",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|p| p.name() == name)
    }

    /// Vertex count, edge list, and bias id. Vertices are lettered in
    /// ascending id with the bias last; non-bias edges come first.
    pub fn topology(&self) -> (usize, Vec<(usize, usize)>, usize) {
        match self {
            QuiverPreset::Fig6Left => (
                5,
                vec![(0, 1), (0, 2), (1, 2), (2, 3), (4, 1), (4, 2), (4, 3)],
                4,
            ),
            QuiverPreset::Fig6Middle => (
                6,
                vec![(0, 2), (1, 2), (2, 3), (2, 4), (5, 2), (5, 3), (5, 4)],
                5,
            ),
            QuiverPreset::Fig6Right => (
                6,
                vec![
                    (0, 1),
                    (0, 2),
                    (1, 3),
                    (2, 3),
                    (3, 4),
                    (5, 1),
                    (5, 2),
                    (5, 3),
                    (5, 4),
                ],
                5,
            ),
        }
    }

    pub fn quiver(&self) -> NeuralQuiver {
        let (n, edges, bias) = self.topology();
        NeuralQuiver::new(n, &edges, bias).expect("presets are valid")
    }

    /// Default widths for the non-bias vertices, ascending id.
    pub fn default_dims(&self) -> Vec<usize> {
        match self {
            QuiverPreset::Fig6Left => vec![2, 4, 8, 2],
            QuiverPreset::Fig6Middle => vec![1, 2, 8, 2, 6],
            QuiverPreset::Fig6Right => vec![2, 4, 4, 8, 2],
        }
    }

    /// Appends the bias width 1 to a non-bias width list.
    pub fn dims(&self, non_bias: &[usize]) -> Result<DimensionVector, GenerateError> {
        let q = self.quiver();
        if non_bias.len() != q.vertex_count() - 1 {
            return Err(GenerateError::DimsArity {
                expected: q.vertex_count() - 1,
                got: non_bias.len(),
            });
        }
        let mut dims = non_bias.to_vec();
        dims.push(1);
        Ok(DimensionVector::new(&q, dims)?)
    }
}

/// Activation family used when generating random models.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActivationKind {
    Identity,
    StepRelu,
    Squashing,
    ShiftedRelu(f64),
    /// Non-radial; centers are drawn uniformly per vertex.
    ShiftedNorm,
}

impl ActivationKind {
    pub fn name(&self) -> &'static str {
        match self {
            ActivationKind::Identity => "identity",
            ActivationKind::StepRelu => "step-relu",
            ActivationKind::Squashing => "squashing",
            ActivationKind::ShiftedRelu(_) => "shifted-relu",
            ActivationKind::ShiftedNorm => "shifted-norm",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GenerateError {
    #[error("expected {expected} dimensions (bias excluded), got {got}")]
    DimsArity { expected: usize, got: usize },
    #[error(transparent)]
    Quiver(#[from] QuiverError),
    #[error(transparent)]
    Dimension(#[from] DimensionError),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// Uniform `[0, 1)` weights on every edge, chosen activation at every
/// non-source vertex.
pub fn random_network(
    quiver: &NeuralQuiver,
    dims: &DimensionVector,
    kind: ActivationKind,
    rng: &mut Xoshiro256PlusPlus,
) -> Result<QuiverNetwork, GenerateError> {
    let weights: Vec<Matrix> = quiver
        .edges()
        .iter()
        .map(|e| {
            let (r, c) = (dims.get(e.target), dims.get(e.source));
            Matrix::from_row_major(r, c, rng.vec_f64(r * c))
        })
        .collect();
    let activations: Vec<Activation> = quiver
        .vertices()
        .map(|v| {
            if quiver.is_source(v) {
                Activation::Identity
            } else {
                match kind {
                    ActivationKind::Identity => Activation::Identity,
                    ActivationKind::StepRelu => Activation::StepRelu,
                    ActivationKind::Squashing => Activation::Squashing,
                    ActivationKind::ShiftedRelu(shift) => Activation::ShiftedRelu { shift },
                    ActivationKind::ShiftedNorm => Activation::ShiftedNorm {
                        center: rng.vec_f64(dims.get(v)),
                    },
                }
            }
        })
        .collect();
    Ok(QuiverNetwork::new(
        quiver.clone(),
        dims.clone(),
        weights,
        activations,
    )?)
}

/// Uniform `[0, 1)` inputs and labels.
pub fn random_batch(
    d_in: usize,
    d_out: usize,
    samples: usize,
    rng: &mut Xoshiro256PlusPlus,
) -> Result<Batch, OptimError> {
    Batch::new(
        (0..samples)
            .map(|_| (rng.vec_f64(d_in), rng.vec_f64(d_out)))
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quiver::{reduced_dimension_vector, VertexId};

    #[test]
    fn presets_validate_and_classify() {
        for preset in QuiverPreset::ALL {
            let q = preset.quiver();
            let class = q.classify();
            assert!(!class.outputs.is_empty());
            assert!(!class.inputs.is_empty());
            assert!(!class.hidden.is_empty());
        }
        // Two-input fan: inputs {a, b}, outputs {d, e}, hidden {c}.
        let class = QuiverPreset::Fig6Middle.quiver().classify();
        assert_eq!(class.inputs, vec![VertexId(0), VertexId(1)]);
        assert_eq!(class.outputs, vec![VertexId(3), VertexId(4)]);
        assert_eq!(class.hidden, vec![VertexId(2)]);
        // Skip chain: inputs {a}, outputs {d}, hidden {b, c}.
        let class = QuiverPreset::Fig6Left.quiver().classify();
        assert_eq!(class.inputs, vec![VertexId(0)]);
        assert_eq!(class.outputs, vec![VertexId(3)]);
        assert_eq!(class.hidden, vec![VertexId(1), VertexId(2)]);
    }

    #[test]
    fn preset_topological_order_is_alphabetical() {
        // The lettered order is a topological order for every preset.
        for preset in QuiverPreset::ALL {
            let q = preset.quiver();
            let order = q.topological_order();
            let pos: Vec<usize> = {
                let mut pos = vec![0; q.vertex_count()];
                for (i, v) in order.iter().enumerate() {
                    pos[v.0] = i;
                }
                pos
            };
            for e in q.edges() {
                assert!(pos[e.source.0] < pos[e.target.0]);
            }
        }
        let q = QuiverPreset::Fig6Left.quiver();
        let order: Vec<usize> = q.topological_order().iter().map(|v| v.0).collect();
        // a and bias before b, b before c, c before d.
        assert_eq!(order, vec![0, 4, 1, 2, 3]);
    }

    #[test]
    fn preset_reduced_dimensions() {
        let cases = [
            (QuiverPreset::Fig6Left, vec![2, 3, 6, 2]),
            (QuiverPreset::Fig6Middle, vec![1, 2, 4, 2, 6]),
            (QuiverPreset::Fig6Right, vec![2, 3, 3, 7, 2]),
        ];
        for (preset, expected) in cases {
            let q = preset.quiver();
            let dims = preset.dims(&preset.default_dims()).unwrap();
            let red = reduced_dimension_vector(&q, &dims);
            let mut expected = expected.clone();
            expected.push(1);
            assert_eq!(red.as_slice(), expected.as_slice(), "{}", preset.name());
        }
    }

    #[test]
    fn incoming_dimension_on_skip_chain() {
        use crate::quiver::incoming_dimension;
        let preset = QuiverPreset::Fig6Left;
        let q = preset.quiver();
        let dims = preset.dims(&[2, 4, 8, 2]).unwrap();
        // Vertex c (id 2) hears from a, b, bias: 2 + 4 + 1.
        assert_eq!(incoming_dimension(&q, &dims, VertexId(2)), 7);
    }

    #[test]
    fn generation_is_deterministic() {
        let preset = QuiverPreset::Fig6Left;
        let q = preset.quiver();
        let dims = preset.dims(&preset.default_dims()).unwrap();
        let a = random_network(
            &q,
            &dims,
            ActivationKind::StepRelu,
            &mut Xoshiro256PlusPlus::from_seed(1),
        )
        .unwrap();
        let b = random_network(
            &q,
            &dims,
            ActivationKind::StepRelu,
            &mut Xoshiro256PlusPlus::from_seed(1),
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dims_arity_is_checked() {
        assert!(matches!(
            QuiverPreset::Fig6Left.dims(&[2, 4, 8]),
            Err(GenerateError::DimsArity {
                expected: 4,
                got: 3
            })
        ));
    }
}
