//! QR decomposition of quiver representations: factor a representation as
//! an orthogonal symmetry acting on an upper-triangular representative,
//! and relate gradient descent on the two.

use std::collections::BTreeMap;

use crate::linalg::{complete_qr, LinalgError, Matrix};
use crate::network::QuiverNetwork;
use crate::optim::{
    group_action, Batch, GdConfig, Objective, OptimError, OrthogonalTuple, ParameterTuple,
};
use crate::quiver::{DimensionVector, NeuralQuiver, VertexId};

#[derive(Debug, thiserror::Error)]
pub enum RepError {
    #[error("quiver has parallel edges between {from} and {to}")]
    DoubleEdge { from: VertexId, to: VertexId },
    #[error("permutation at vertex {0} is missing, has the wrong length, or is not a bijection")]
    InvalidPermutation(VertexId),
    #[error("representation entry for edge {edge} is {rows}x{cols}, expected {expected_rows}x{expected_cols}")]
    EntryShape {
        edge: usize,
        rows: usize,
        cols: usize,
        expected_rows: usize,
        expected_cols: usize,
    },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Optim(#[from] OptimError),
}

/// A representation together with its per-vertex merged matrices
/// `A_{-> i}` (incoming edge blocks stacked by ascending edge id).
#[derive(Debug, Clone)]
pub struct RepresentationView {
    pub params: ParameterTuple,
    pub merged: BTreeMap<VertexId, Matrix>,
}

impl RepresentationView {
    pub fn new(
        quiver: &NeuralQuiver,
        dims: &DimensionVector,
        params: ParameterTuple,
    ) -> Result<Self, RepError> {
        check_shapes(quiver, dims, &params)?;
        let merged = quiver
            .vertices()
            .filter(|&v| !quiver.is_source(v))
            .map(|v| (v, merged_incoming(quiver, &params, v, None)))
            .collect();
        Ok(Self { params, merged })
    }
}

fn check_shapes(
    quiver: &NeuralQuiver,
    dims: &DimensionVector,
    params: &ParameterTuple,
) -> Result<(), RepError> {
    if params.matrices().len() != quiver.edge_count() {
        return Err(OptimError::ParameterCount {
            expected: quiver.edge_count(),
            got: params.matrices().len(),
        }
        .into());
    }
    for e in quiver.edges() {
        let m = params.edge(e.edge_id);
        let (er, ec) = (dims.get(e.target), dims.get(e.source));
        if m.rows() != er || m.cols() != ec {
            return Err(RepError::EntryShape {
                edge: e.edge_id,
                rows: m.rows(),
                cols: m.cols(),
                expected_rows: er,
                expected_cols: ec,
            });
        }
    }
    Ok(())
}

/// Stack of `A_e . Q_{s(e)}` over incoming edges of `v`, ascending edge id
/// (`Q` identity when absent from the map).
fn merged_incoming(
    quiver: &NeuralQuiver,
    params: &ParameterTuple,
    v: VertexId,
    q_map: Option<&BTreeMap<VertexId, Matrix>>,
) -> Matrix {
    let blocks: Vec<Matrix> = quiver
        .incoming_edges(v)
        .iter()
        .map(|&e| {
            let s = quiver.edges()[e].source;
            let a = params.edge(e);
            match q_map.and_then(|m| m.get(&s)) {
                Some(qs) => a.matmul(qs),
                None => a.clone(),
            }
        })
        .collect();
    let refs: Vec<&Matrix> = blocks.iter().collect();
    Matrix::hstack(&refs)
}

fn find_parallel_edges(quiver: &NeuralQuiver) -> Option<(VertexId, VertexId)> {
    let mut seen = std::collections::HashSet::new();
    for e in quiver.edges() {
        if !seen.insert((e.source.0, e.target.0)) {
            return Some((e.source, e.target));
        }
    }
    None
}

/// Factors `A = Q . R` (the orthogonal group action) with every hidden
/// vertex's merged matrix `R_{-> i}` upper-triangular with non-negative
/// diagonal and stored zeros below it. `Q` is the identity at sources and
/// sinks. Requires a quiver without parallel edges.
pub fn quiver_qr(
    params: &ParameterTuple,
    quiver: &NeuralQuiver,
    dims: &DimensionVector,
) -> Result<(OrthogonalTuple, ParameterTuple), RepError> {
    quiver_qr_impl(params, quiver, dims, None)
}

/// [`quiver_qr`] with a fixed column permutation per non-source vertex:
/// each `R_{-> i}` is upper-triangular after permuting its columns into
/// the given order. Missing entries mean the identity permutation
/// (permutations at sinks have no effect).
pub fn quiver_qr_permuted(
    params: &ParameterTuple,
    quiver: &NeuralQuiver,
    dims: &DimensionVector,
    permutations: &BTreeMap<VertexId, Vec<usize>>,
) -> Result<(OrthogonalTuple, ParameterTuple), RepError> {
    quiver_qr_impl(params, quiver, dims, Some(permutations))
}

fn quiver_qr_impl(
    params: &ParameterTuple,
    quiver: &NeuralQuiver,
    dims: &DimensionVector,
    permutations: Option<&BTreeMap<VertexId, Vec<usize>>>,
) -> Result<(OrthogonalTuple, ParameterTuple), RepError> {
    if let Some((from, to)) = find_parallel_edges(quiver) {
        return Err(RepError::DoubleEdge { from, to });
    }
    check_shapes(quiver, dims, params)?;
    if let Some(perms) = permutations {
        for (&v, perm) in perms {
            let expected = quiver
                .incoming_edges(v)
                .iter()
                .map(|&e| dims.get(quiver.edges()[e].source))
                .sum::<usize>();
            let mut seen = vec![false; perm.len()];
            let valid = perm.len() == expected
                && perm.iter().all(|&j| {
                    if j >= perm.len() || seen[j] {
                        false
                    } else {
                        seen[j] = true;
                        true
                    }
                });
            if !valid {
                return Err(RepError::InvalidPermutation(v));
            }
        }
    }

    let mut q_map: BTreeMap<VertexId, Matrix> = BTreeMap::new();
    let mut r_entries: Vec<Option<Matrix>> = vec![None; quiver.edge_count()];

    for v in quiver.topological_order() {
        if quiver.is_source(v) {
            continue;
        }
        let merged = merged_incoming(quiver, params, v, Some(&q_map));
        let perm: Option<&Vec<usize>> = permutations.and_then(|p| p.get(&v));

        let r_merged = if quiver.is_hidden(v) {
            let working = match perm {
                Some(p) => merged.permute_cols(p),
                None => merged,
            };
            let qr = complete_qr(&working)?;
            // Pad to d_v rows so the entry shapes stay in the
            // representation space (Inc_v composed with the trapezoid).
            let mut full = Matrix::zeros(dims.get(v), working.cols());
            full.set_block(0, 0, &qr.r);
            q_map.insert(v, qr.q);
            match perm {
                Some(p) => full.unpermute_cols(p),
                None => full,
            }
        } else {
            merged
        };

        let mut off = 0;
        for &e in quiver.incoming_edges(v) {
            let w = dims.get(quiver.edges()[e].source);
            r_entries[e] = Some(r_merged.block(0, r_merged.rows(), off, off + w));
            off += w;
        }
    }

    let q = OrthogonalTuple::new(q_map)?;
    let r = ParameterTuple::new(r_entries.into_iter().map(Option::unwrap).collect());
    Ok((q, r))
}

/// The column order that lists, block by incoming edge, each block's first
/// `reduced` coordinates, followed by all remaining coordinates ascending.
/// Feeding these permutations to [`quiver_qr_permuted`] makes the top-left
/// blocks of `R` match the QR compression pass.
pub fn reduced_first_permutation(
    quiver: &NeuralQuiver,
    dims: &DimensionVector,
    reduced: &DimensionVector,
    v: VertexId,
) -> Vec<usize> {
    let mut first = Vec::new();
    let mut rest = Vec::new();
    let mut off = 0;
    for &e in quiver.incoming_edges(v) {
        let s = quiver.edges()[e].source;
        let ds = dims.get(s);
        let dr = reduced.get(s);
        first.extend(off..off + dr);
        rest.extend(off + dr..off + ds);
        off += ds;
    }
    first.extend(rest);
    first
}

/// Per-step deviation of `gamma^k(W) - Q . gamma^k(R)` for the
/// [`quiver_qr`] factors of a radial network on a simple quiver.
#[derive(Debug, Clone)]
pub struct CorollaryStep {
    pub step: usize,
    pub deviation: f64,
}

#[derive(Debug, Clone)]
pub struct CorollaryReport {
    pub steps: Vec<CorollaryStep>,
}

impl CorollaryReport {
    pub fn max_deviation(&self) -> f64 {
        self.steps.iter().fold(0.0, |m, s| m.max(s.deviation))
    }
}

/// Checks that gradient descent commutes with the representation QR:
/// descent from `W` stays the `Q`-image of descent from `R`, step by step
/// up to `config.steps`.
pub fn verify_corollary(
    net: &QuiverNetwork,
    batch: &Batch,
    config: &GdConfig,
) -> Result<CorollaryReport, RepError> {
    for v in net.quiver().vertices() {
        if !net.quiver().is_source(v) && !net.activations()[v.0].is_radial() {
            return Err(OptimError::NotRadial(v).into());
        }
    }
    let quiver = net.quiver();
    let dims = net.dims();
    let w = ParameterTuple::from_network(net);
    let (q, r) = quiver_qr(&w, quiver, dims)?;

    let objective = Objective::new(quiver, dims, net.activations(), batch, config.cost)?;
    let mut w_cur = w;
    let mut r_cur = r;
    let mut steps = Vec::with_capacity(config.steps);
    for step in 1..=config.steps {
        w_cur = objective.gd_step(&w_cur, config.learning_rate)?;
        r_cur = objective.gd_step(&r_cur, config.learning_rate)?;
        let deviation = w_cur.max_abs_diff(&group_action(quiver, &q, &r_cur));
        steps.push(CorollaryStep { step, deviation });
    }
    Ok(CorollaryReport { steps })
}
