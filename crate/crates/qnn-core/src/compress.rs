//! Lossless model compression for networks with rescaling activations:
//! the QR pass, the rank-aware refinement, and the change-of-basis
//! alternative, plus subnetwork verification.
//!
//! All three algorithms walk the vertices in the deterministic topological
//! order, merge the incoming weights at each vertex into a single matrix,
//! and rewrite that vertex's feature basis so the merged matrix becomes
//! upper-trapezoidal. Sources and sinks keep their widths; hidden vertices
//! shrink to the reduced dimension (or to the merged rank).

use std::collections::BTreeMap;

use crate::linalg::{
    complete_qr, left_inverse, numerical_rank, pivot_permutation, truncate_singular_values,
    LinalgError, Matrix,
};
use crate::network::{Activation, NetworkError, QuiverNetwork};
use crate::quiver::{reduced_dimension_vector, DimensionVector, VertexId};
use crate::rng::Xoshiro256PlusPlus;

/// Which compression pass produced a result.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompressionAlgorithm {
    Qr,
    RankAware,
    ChangeOfBasis,
}

#[derive(Debug, thiserror::Error)]
pub enum CompressError {
    /// Reserved for activation kinds outside the rescaling family; every
    /// built-in activation is rescaling, so current callers never see it.
    #[error("activation at vertex {0} is not a rescaling function")]
    NotRescaling(VertexId),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("basis identity violated at vertex {vertex} (deviation {deviation:.3e})")]
    IdentityViolated { vertex: VertexId, deviation: f64 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}

/// Output of a compression pass: the reduced network, the orthogonal
/// change-of-basis matrix per hidden vertex, and (for the change-of-basis
/// algorithm) the injective basis / left-inverse pair per hidden vertex.
#[derive(Debug, Clone)]
pub struct CompressionResult {
    pub reduced: QuiverNetwork,
    pub q_tuple: BTreeMap<VertexId, Matrix>,
    pub algorithm: CompressionAlgorithm,
    pub basis_maps: Option<BTreeMap<VertexId, (Matrix, Matrix)>>,
}

impl CompressionResult {
    /// The per-vertex injective maps embedding the reduced network into the
    /// original one: `Q_i . Inc_i` for the QR passes, `B_i` for the
    /// change-of-basis pass, identity at sources and sinks.
    pub fn subnetwork_witness(&self, original_dims: &DimensionVector) -> SubnetworkWitness {
        let quiver = self.reduced.quiver();
        let reduced_dims = self.reduced.dims();
        let alphas = quiver
            .vertices()
            .map(|v| {
                if let Some((basis, _)) = self.basis_maps.as_ref().and_then(|m| m.get(&v)) {
                    basis.clone()
                } else if let Some(q) = self.q_tuple.get(&v) {
                    q.block(0, original_dims.get(v), 0, reduced_dims.get(v))
                } else {
                    Matrix::identity(original_dims.get(v))
                }
            })
            .collect();
        SubnetworkWitness { alphas }
    }
}

/// The merged incoming matrix at `v`: horizontal stack of
/// `W_e . Q_{s(e)} . Inc_{s(e)}` over incoming edges in ascending edge id,
/// where `Inc` takes the first `small_dims[s(e)]` coordinates and `Q` is
/// identity for vertices absent from `q_map`.
fn merged_incoming(
    net: &QuiverNetwork,
    v: VertexId,
    q_map: &BTreeMap<VertexId, Matrix>,
    small_dims: &[usize],
) -> Matrix {
    let quiver = net.quiver();
    let blocks: Vec<Matrix> = quiver
        .incoming_edges(v)
        .iter()
        .map(|&e| {
            let s = quiver.edges()[e].source;
            let w = &net.weights()[e];
            match q_map.get(&s) {
                Some(qs) => w.matmul(&qs.block(0, qs.rows(), 0, small_dims[s.0])),
                None => w.block(0, w.rows(), 0, small_dims[s.0]),
            }
        })
        .collect();
    let refs: Vec<&Matrix> = blocks.iter().collect();
    Matrix::hstack(&refs)
}

fn split_columns(merged: &Matrix, widths: &[usize]) -> Vec<Matrix> {
    let mut out = Vec::with_capacity(widths.len());
    let mut off = 0;
    for &w in widths {
        out.push(merged.block(0, merged.rows(), off, off + w));
        off += w;
    }
    out
}

/// The QR compression pass. The reduced network has exactly the reduced
/// dimension vector; hidden activations are either the same radial variant
/// at the smaller width or the original activation conjugated by the
/// orthogonal factor.
pub fn qr_compress(net: &QuiverNetwork) -> Result<CompressionResult, CompressError> {
    let quiver = net.quiver();
    let d = net.dims();
    let d_red = reduced_dimension_vector(quiver, d);

    let mut q_map: BTreeMap<VertexId, Matrix> = BTreeMap::new();
    let mut new_weights: Vec<Option<Matrix>> = vec![None; quiver.edge_count()];
    let mut new_acts: Vec<Activation> = vec![Activation::Identity; quiver.vertex_count()];

    for v in quiver.topological_order() {
        if quiver.is_source(v) {
            continue;
        }
        let merged = merged_incoming(net, v, &q_map, d_red.as_slice());
        let act = &net.activations()[v.0];
        let r = if quiver.is_hidden(v) {
            let qr = complete_qr(&merged)?;
            // min(d_v, reduced incoming) is the reduced dimension at v.
            debug_assert_eq!(qr.r.rows(), d_red.get(v));
            new_acts[v.0] = if act.is_radial() {
                act.radial_restriction(d_red.get(v))
            } else {
                Activation::Conjugated {
                    base: Box::new(act.clone()),
                    q: qr.q.clone(),
                    inner_dim: d_red.get(v),
                }
            };
            q_map.insert(v, qr.q);
            qr.r
        } else {
            // Sinks keep their activation and width; the merged matrix is
            // already the reduced weight row.
            new_acts[v.0] = act.clone();
            merged
        };
        let widths: Vec<usize> = quiver
            .incoming_edges(v)
            .iter()
            .map(|&e| d_red.get(quiver.edges()[e].source))
            .collect();
        for (&e, block) in quiver
            .incoming_edges(v)
            .iter()
            .zip(split_columns(&r, &widths))
        {
            new_weights[e] = Some(block);
        }
    }

    let reduced = QuiverNetwork::new(
        quiver.clone(),
        d_red,
        new_weights.into_iter().map(Option::unwrap).collect(),
        new_acts,
    )?;
    Ok(CompressionResult {
        reduced,
        q_tuple: q_map,
        algorithm: CompressionAlgorithm::Qr,
        basis_maps: None,
    })
}

/// The rank-aware pass: like [`qr_compress`] but each hidden width drops
/// to the numerical rank of the merged matrix, which can undercut the
/// reduced dimension when incoming weights are linearly dependent.
///
/// `tol` overrides the default rank tolerance. `sv_threshold` switches on
/// the lossy variant that first discards singular values at or below the
/// threshold; with it the output is no longer guaranteed to reproduce the
/// feedforward function.
pub fn qr_compress_rank_aware(
    net: &QuiverNetwork,
    tol: Option<f64>,
    sv_threshold: Option<f64>,
) -> Result<CompressionResult, CompressError> {
    let quiver = net.quiver();
    let d = net.dims();

    let mut k: Vec<usize> = d.as_slice().to_vec(); // sources and sinks keep d_i
    let mut q_map: BTreeMap<VertexId, Matrix> = BTreeMap::new();
    let mut new_weights: Vec<Option<Matrix>> = vec![None; quiver.edge_count()];
    let mut new_acts: Vec<Activation> = vec![Activation::Identity; quiver.vertex_count()];

    for v in quiver.topological_order() {
        if quiver.is_source(v) {
            continue;
        }
        let mut merged = merged_incoming(net, v, &q_map, &k);
        let act = &net.activations()[v.0];

        let reduced_row = if quiver.is_hidden(v) {
            if let Some(threshold) = sv_threshold {
                let (truncated, _) = truncate_singular_values(&merged, threshold)?;
                merged = truncated;
            }
            let rank = numerical_rank(&merged, tol)?;
            // A zero merged matrix would give width 0; keep one dimension
            // so the network stays well-formed (its features are zero).
            let kv = rank.max(1);
            let (q, r) = if rank == 0 {
                (Matrix::identity(d.get(v)), Matrix::zeros(1, merged.cols()))
            } else {
                let perm = pivot_permutation(&merged, kv)?;
                let qr = complete_qr(&merged.permute_cols(&perm))?;
                // Rows past the rank hold only roundoff; the permutation
                // guarantees the leading block is full rank.
                let r = qr.r.block(0, kv, 0, qr.r.cols()).unpermute_cols(&perm);
                (qr.q, r)
            };
            new_acts[v.0] = if act.is_radial() {
                act.radial_restriction(kv)
            } else {
                Activation::Conjugated {
                    base: Box::new(act.clone()),
                    q: q.clone(),
                    inner_dim: kv,
                }
            };
            q_map.insert(v, q);
            k[v.0] = kv;
            r
        } else {
            new_acts[v.0] = act.clone();
            merged
        };

        let widths: Vec<usize> = quiver
            .incoming_edges(v)
            .iter()
            .map(|&e| k[quiver.edges()[e].source.0])
            .collect();
        for (&e, block) in quiver
            .incoming_edges(v)
            .iter()
            .zip(split_columns(&reduced_row, &widths))
        {
            new_weights[e] = Some(block);
        }
    }

    let dims = DimensionVector::new(quiver, k).expect("rank-aware widths are positive");
    let reduced = QuiverNetwork::new(
        quiver.clone(),
        dims,
        new_weights.into_iter().map(Option::unwrap).collect(),
        new_acts,
    )?;
    Ok(CompressionResult {
        reduced,
        q_tuple: q_map,
        algorithm: CompressionAlgorithm::RankAware,
        basis_maps: None,
    })
}

/// The change-of-basis pass: instead of orthogonalizing, keep a maximal
/// linearly independent subset of the merged columns as the new basis
/// `B_i` and rewrite weights through a left inverse `C_i`. Hidden widths
/// match the rank-aware pass; activations become `C_i . rho_i . B_i`.
///
/// `tol` is the relative residual below which a column counts as dependent
/// (default `1e-10`).
pub fn compress_change_of_basis(
    net: &QuiverNetwork,
    tol: Option<f64>,
) -> Result<CompressionResult, CompressError> {
    let tol = tol.unwrap_or(1e-10);
    let quiver = net.quiver();
    let d = net.dims();

    let mut k: Vec<usize> = d.as_slice().to_vec();
    // basis per vertex; None means identity.
    let mut basis: Vec<Option<Matrix>> = vec![None; quiver.vertex_count()];
    let mut basis_maps: BTreeMap<VertexId, (Matrix, Matrix)> = BTreeMap::new();
    let mut new_weights: Vec<Option<Matrix>> = vec![None; quiver.edge_count()];
    let mut new_acts: Vec<Activation> = vec![Activation::Identity; quiver.vertex_count()];

    for v in quiver.topological_order() {
        if quiver.is_source(v) {
            continue;
        }
        let edge_blocks: Vec<Matrix> = quiver
            .incoming_edges(v)
            .iter()
            .map(|&e| {
                let s = quiver.edges()[e].source;
                let w = &net.weights()[e];
                match &basis[s.0] {
                    Some(bs) => w.matmul(bs),
                    None => w.clone(),
                }
            })
            .collect();
        let act = &net.activations()[v.0];

        if quiver.is_hidden(v) {
            let refs: Vec<&Matrix> = edge_blocks.iter().collect();
            let stacked = Matrix::hstack(&refs);
            let b = select_independent_columns(&stacked, tol, d.get(v));
            let c = left_inverse(&b)?;
            for (&e, block) in quiver.incoming_edges(v).iter().zip(&edge_blocks) {
                new_weights[e] = Some(c.matmul(block));
            }
            new_acts[v.0] = Activation::BasisChanged {
                base: Box::new(act.clone()),
                basis: b.clone(),
                left_inverse: c.clone(),
            };
            check_basis_identities(quiver, v, &b, &c, act, &edge_blocks, &new_weights)?;
            k[v.0] = b.cols();
            basis[v.0] = Some(b.clone());
            basis_maps.insert(v, (b, c));
        } else {
            // Sink: keep the width, push the basis through the weights.
            new_acts[v.0] = act.clone();
            for (&e, block) in quiver.incoming_edges(v).iter().zip(edge_blocks) {
                new_weights[e] = Some(block);
            }
        }
    }

    let dims = DimensionVector::new(quiver, k).expect("basis widths are positive");
    let reduced = QuiverNetwork::new(
        quiver.clone(),
        dims,
        new_weights.into_iter().map(Option::unwrap).collect(),
        new_acts,
    )?;
    Ok(CompressionResult {
        reduced,
        q_tuple: BTreeMap::new(),
        algorithm: CompressionAlgorithm::ChangeOfBasis,
        basis_maps: Some(basis_maps),
    })
}

/// Left-to-right greedy scan keeping each column whose residual after
/// projecting onto the span of the kept ones exceeds `tol` times its norm.
/// A zero stack degenerates to the first-coordinate inclusion so the
/// reduced width stays positive.
fn select_independent_columns(stacked: &Matrix, tol: f64, rows: usize) -> Matrix {
    let mut kept: Vec<usize> = Vec::new();
    let mut ortho: Vec<Vec<f64>> = Vec::new();
    for j in 0..stacked.cols() {
        let col = stacked.col_vec(j);
        let col_norm = col.iter().map(|x| x * x).sum::<f64>().sqrt();
        if col_norm == 0.0 {
            continue;
        }
        let mut resid = col.clone();
        // Two projection passes for numerical robustness.
        for _ in 0..2 {
            for q in &ortho {
                let coeff: f64 = q.iter().zip(&resid).map(|(a, b)| a * b).sum();
                for (r, qi) in resid.iter_mut().zip(q) {
                    *r -= coeff * qi;
                }
            }
        }
        let resid_norm = resid.iter().map(|x| x * x).sum::<f64>().sqrt();
        if resid_norm > tol * col_norm {
            kept.push(j);
            ortho.push(resid.iter().map(|x| x / resid_norm).collect());
        }
    }
    if kept.is_empty() {
        return Matrix::inclusion(rows, 1);
    }
    let mut b = Matrix::zeros(rows, kept.len());
    for (jj, &j) in kept.iter().enumerate() {
        for i in 0..rows {
            b[(i, jj)] = stacked[(i, j)];
        }
    }
    b
}

/// The two defining identities of the change-of-basis output:
/// `B . tau = rho . B` (checked at seeded random points) and
/// `B . W_red_e = W_e . B_{s(e)}` per incoming edge.
fn check_basis_identities(
    quiver: &crate::quiver::NeuralQuiver,
    v: VertexId,
    b: &Matrix,
    c: &Matrix,
    act: &Activation,
    edge_blocks: &[Matrix],
    new_weights: &[Option<Matrix>],
) -> Result<(), CompressError> {
    const IDENTITY_TOL: f64 = 1e-10;

    for (&e, block) in quiver.incoming_edges(v).iter().zip(edge_blocks) {
        let lhs = b.matmul(new_weights[e].as_ref().unwrap());
        let dev = lhs.max_abs_diff(block);
        if dev > IDENTITY_TOL * block.max_abs().max(1.0) {
            return Err(CompressError::IdentityViolated {
                vertex: v,
                deviation: dev,
            });
        }
    }

    let mut rng = Xoshiro256PlusPlus::from_seed(0xb0_0c_5e_1e);
    for _ in 0..20 {
        let x: Vec<f64> = (0..b.cols())
            .map(|_| 3.0 * (rng.next_f64() - 0.5))
            .collect();
        let bx = b.matvec(&x);
        let lhs = b.matvec(&c.matvec(&act.apply(&bx)?));
        let rhs = act.apply(&bx)?;
        let dev = lhs
            .iter()
            .zip(&rhs)
            .fold(0.0f64, |m, (a, r)| m.max((a - r).abs()));
        if dev > IDENTITY_TOL * rhs.iter().fold(1.0f64, |m, r| m.max(r.abs())) {
            return Err(CompressError::IdentityViolated {
                vertex: v,
                deviation: dev,
            });
        }
    }
    Ok(())
}

/// Maximum infinity-norm deviation between the feedforward functions of
/// two networks over `trials` seeded uniform `[0, 1)` inputs.
pub fn feedforward_equality(
    net_a: &QuiverNetwork,
    net_b: &QuiverNetwork,
    trials: usize,
    seed: u64,
) -> Result<f64, NetworkError> {
    let d_in = net_a.input_dim();
    if d_in != net_b.input_dim() {
        return Err(NetworkError::DimensionMismatch {
            expected: d_in,
            got: net_b.input_dim(),
        });
    }
    if net_a.output_dim() != net_b.output_dim() {
        return Err(NetworkError::DimensionMismatch {
            expected: net_a.output_dim(),
            got: net_b.output_dim(),
        });
    }

    let mut rng = Xoshiro256PlusPlus::from_seed(seed);
    let inputs: Vec<Vec<f64>> = (0..trials).map(|_| rng.vec_f64(d_in)).collect();

    let worst = crate::par::try_fold_chunks(
        &inputs,
        |x| {
            let (ya, _) = net_a.feedforward(x)?;
            let (yb, _) = net_b.feedforward(x)?;
            Ok(ya
                .iter()
                .zip(&yb)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs())))
        },
        |a, b| a.max(*b),
    )?;
    Ok(worst.unwrap_or(0.0))
}

/// Per-vertex injective maps `alpha_i` embedding a smaller network into a
/// bigger one over the same quiver; the bias map is the 1x1 identity.
#[derive(Debug, Clone)]
pub struct SubnetworkWitness {
    pub alphas: Vec<Matrix>,
}

/// Outcome of [`verify_subnetwork`]: largest deviation seen in each of the
/// three intertwining checks, plus the edges whose weight identity failed.
#[derive(Debug, Clone)]
pub struct SubnetworkReport {
    pub edge_deviation: f64,
    pub activation_deviation: f64,
    pub feedforward_deviation: f64,
    pub failing_edges: Vec<(usize, f64)>,
    pub tolerance: f64,
    pub pass: bool,
}

impl SubnetworkReport {
    pub fn max_deviation(&self) -> f64 {
        self.edge_deviation
            .max(self.activation_deviation)
            .max(self.feedforward_deviation)
    }
}

/// Checks that `small` embeds into `big` through `witness`:
/// `W_e . alpha_{s(e)} = alpha_{t(e)} . V_e` on every edge,
/// `rho_i . alpha_i = alpha_i . tau_i` at 200 random points per non-source
/// vertex, and the feedforward intertwining `F . alpha_in = alpha_out . F~`
/// at 50 random inputs.
pub fn verify_subnetwork(
    big: &QuiverNetwork,
    small: &QuiverNetwork,
    witness: &SubnetworkWitness,
    tol: f64,
    seed: u64,
) -> Result<SubnetworkReport, CompressError> {
    let quiver = big.quiver();
    if quiver != small.quiver() {
        return Err(CompressError::ShapeMismatch(
            "networks live on different quivers".into(),
        ));
    }
    if witness.alphas.len() != quiver.vertex_count() {
        return Err(CompressError::ShapeMismatch(format!(
            "expected {} witness maps, got {}",
            quiver.vertex_count(),
            witness.alphas.len()
        )));
    }
    for v in quiver.vertices() {
        let a = &witness.alphas[v.0];
        if a.rows() != big.dims().get(v) || a.cols() != small.dims().get(v) {
            return Err(CompressError::ShapeMismatch(format!(
                "witness at {v} is {}x{}, expected {}x{}",
                a.rows(),
                a.cols(),
                big.dims().get(v),
                small.dims().get(v)
            )));
        }
    }
    let bias = quiver.bias();
    if witness.alphas[bias.0].max_abs_diff(&Matrix::identity(1)) != 0.0 {
        return Err(CompressError::ShapeMismatch(
            "bias witness must be the 1x1 identity".into(),
        ));
    }

    let mut rng = Xoshiro256PlusPlus::from_seed(seed);

    let mut edge_dev = 0.0f64;
    let mut failing = Vec::new();
    for e in quiver.edges() {
        let lhs = big.weights()[e.edge_id].matmul(&witness.alphas[e.source.0]);
        let rhs = witness.alphas[e.target.0].matmul(&small.weights()[e.edge_id]);
        let dev = lhs.max_abs_diff(&rhs);
        if dev > tol {
            failing.push((e.edge_id, dev));
        }
        edge_dev = edge_dev.max(dev);
    }

    let mut act_dev = 0.0f64;
    for v in quiver.vertices() {
        if quiver.is_source(v) {
            continue;
        }
        let alpha = &witness.alphas[v.0];
        for _ in 0..200 {
            let x: Vec<f64> = (0..small.dims().get(v))
                .map(|_| 3.0 * (rng.next_f64() - 0.5))
                .collect();
            let lhs = big.activations()[v.0].apply(&alpha.matvec(&x))?;
            let rhs = alpha.matvec(&small.activations()[v.0].apply(&x)?);
            let dev = lhs
                .iter()
                .zip(&rhs)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            act_dev = act_dev.max(dev);
        }
    }

    let class = quiver.classify();
    let alpha_in = block_diagonal(&class.inputs, &witness.alphas);
    let alpha_out = block_diagonal(&class.outputs, &witness.alphas);
    let inputs: Vec<Vec<f64>> = (0..50).map(|_| rng.vec_f64(small.input_dim())).collect();
    let ff_devs = crate::par::try_map(&inputs, |x| -> Result<f64, CompressError> {
        let (big_out, _) = big.feedforward(&alpha_in.matvec(x))?;
        let (small_out, _) = small.feedforward(x)?;
        let mapped = alpha_out.matvec(&small_out);
        Ok(big_out
            .iter()
            .zip(&mapped)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs())))
    })?;
    let ff_dev = ff_devs.into_iter().fold(0.0, f64::max);

    let pass = edge_dev <= tol && act_dev <= tol && ff_dev <= tol;
    Ok(SubnetworkReport {
        edge_deviation: edge_dev,
        activation_deviation: act_dev,
        feedforward_deviation: ff_dev,
        failing_edges: failing,
        tolerance: tol,
        pass,
    })
}

fn block_diagonal(vertices: &[VertexId], alphas: &[Matrix]) -> Matrix {
    let rows: usize = vertices.iter().map(|v| alphas[v.0].rows()).sum();
    let cols: usize = vertices.iter().map(|v| alphas[v.0].cols()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let (mut r0, mut c0) = (0, 0);
    for v in vertices {
        let a = &alphas[v.0];
        out.set_block(r0, c0, a);
        r0 += a.rows();
        c0 += a.cols();
    }
    out
}
