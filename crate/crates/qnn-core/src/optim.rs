//! Loss, analytic gradients, the orthogonal action on parameter space,
//! gradient descent and projected gradient descent, the interpolating
//! subspace between full and reduced parameter spaces, and the verifier
//! for the compression/training equivalence.

use std::collections::BTreeMap;

use crate::compress::{qr_compress, CompressError};
use crate::linalg::Matrix;
use crate::network::{forward_trace, Activation, NetworkError, QuiverNetwork, ORTHOGONALITY_TOL};
use crate::quiver::{reduced_dimension_vector, DimensionVector, NeuralQuiver, VertexId};

#[derive(Debug, thiserror::Error)]
pub enum OptimError {
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Compress(#[from] CompressError),
    #[error("batch sample {index}: expected {expected} values, got {got}")]
    BatchShape {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("batch must contain at least one sample")]
    EmptyBatch,
    #[error("parameter tuple has {got} entries, quiver has {expected} edges")]
    ParameterCount { expected: usize, got: usize },
    #[error("orthogonal tuple entry at vertex {vertex} is not orthogonal (defect {defect:.3e})")]
    NotOrthogonal { vertex: VertexId, defect: f64 },
    #[error("equivalence verification requires radial activations, vertex {0} is not")]
    NotRadial(VertexId),
}

/// One matrix per edge: a point of the parameter space attached to a
/// `(quiver, dimension vector)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterTuple(Vec<Matrix>);

impl ParameterTuple {
    pub fn new(entries: Vec<Matrix>) -> Self {
        Self(entries)
    }

    pub fn from_network(net: &QuiverNetwork) -> Self {
        Self(net.weights().to_vec())
    }

    pub fn matrices(&self) -> &[Matrix] {
        &self.0
    }

    pub fn into_matrices(self) -> Vec<Matrix> {
        self.0
    }

    pub fn edge(&self, e: usize) -> &Matrix {
        &self.0[e]
    }

    pub fn add(&self, other: &Self) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a.add(b)).collect())
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            a.add_assign(b);
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a.sub(b)).collect())
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(self.0.iter().map(|m| m.scale(s)).collect())
    }

    /// Largest absolute entry difference over all edges.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .fold(0.0, |m, (a, b)| m.max(a.max_abs_diff(b)))
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, e| m.max(e.max_abs()))
    }
}

/// One orthogonal matrix per hidden vertex; sources, sinks, and the bias
/// carry an implicit identity.
#[derive(Debug, Clone)]
pub struct OrthogonalTuple {
    entries: BTreeMap<VertexId, Matrix>,
}

impl OrthogonalTuple {
    pub fn new(entries: BTreeMap<VertexId, Matrix>) -> Result<Self, OptimError> {
        for (&v, q) in &entries {
            let defect = q.orthogonality_defect();
            if q.rows() != q.cols() || defect > ORTHOGONALITY_TOL {
                return Err(OptimError::NotOrthogonal { vertex: v, defect });
            }
        }
        Ok(Self { entries })
    }

    pub fn identity() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }

    pub fn get(&self, v: VertexId) -> Option<&Matrix> {
        self.entries.get(&v)
    }

    pub fn entries(&self) -> &BTreeMap<VertexId, Matrix> {
        &self.entries
    }

    /// The group inverse: every entry transposed.
    pub fn inverse(&self) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .map(|(&v, q)| (v, q.transpose()))
                .collect(),
        }
    }
}

/// The linear action `W  ->  (Q_{t(e)} W_e Q_{s(e)}^-1)_e`, identity
/// factors at non-hidden endpoints.
pub fn group_action(
    quiver: &NeuralQuiver,
    q: &OrthogonalTuple,
    w: &ParameterTuple,
) -> ParameterTuple {
    let entries = quiver
        .edges()
        .iter()
        .map(|e| {
            let mut m = w.edge(e.edge_id).clone();
            if let Some(qt) = q.get(e.target) {
                m = qt.matmul(&m);
            }
            if let Some(qs) = q.get(e.source) {
                m = m.matmul(&qs.transpose());
            }
            m
        })
        .collect();
    ParameterTuple(entries)
}

/// Training batch: input/label pairs with consistent widths.
#[derive(Debug, Clone)]
pub struct Batch {
    samples: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Batch {
    pub fn new(samples: Vec<(Vec<f64>, Vec<f64>)>) -> Result<Self, OptimError> {
        if samples.is_empty() {
            return Err(OptimError::EmptyBatch);
        }
        let (x0, y0) = (&samples[0].0, &samples[0].1);
        for (i, (x, y)) in samples.iter().enumerate() {
            if x.len() != x0.len() {
                return Err(OptimError::BatchShape {
                    index: i,
                    expected: x0.len(),
                    got: x.len(),
                });
            }
            if y.len() != y0.len() {
                return Err(OptimError::BatchShape {
                    index: i,
                    expected: y0.len(),
                    got: y.len(),
                });
            }
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[(Vec<f64>, Vec<f64>)] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Cost on the output space; squared error is the only built-in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Cost {
    #[default]
    SquaredError,
}

impl Cost {
    pub fn value(&self, output: &[f64], target: &[f64]) -> f64 {
        match self {
            Cost::SquaredError => {
                0.5 * output
                    .iter()
                    .zip(target)
                    .map(|(o, t)| (o - t) * (o - t))
                    .sum::<f64>()
            }
        }
    }

    pub fn gradient(&self, output: &[f64], target: &[f64]) -> Vec<f64> {
        match self {
            Cost::SquaredError => output.iter().zip(target).map(|(o, t)| o - t).collect(),
        }
    }
}

/// Gradient-descent hyperparameters.
#[derive(Debug, Clone, Copy)]
pub struct GdConfig {
    pub learning_rate: f64,
    pub steps: usize,
    pub cost: Cost,
}

impl GdConfig {
    pub fn new(learning_rate: f64, steps: usize, cost: Cost) -> Self {
        assert!(learning_rate > 0.0, "learning rate must be positive");
        Self {
            learning_rate,
            steps,
            cost,
        }
    }
}

/// A loss landscape: network shape (quiver + dims + activations), batch,
/// and cost. Parameters vary; everything else is fixed.
pub struct Objective<'a> {
    quiver: &'a NeuralQuiver,
    dims: &'a DimensionVector,
    activations: &'a [Activation],
    batch: &'a Batch,
    cost: Cost,
}

impl<'a> Objective<'a> {
    pub fn new(
        quiver: &'a NeuralQuiver,
        dims: &'a DimensionVector,
        activations: &'a [Activation],
        batch: &'a Batch,
        cost: Cost,
    ) -> Result<Self, OptimError> {
        let class = quiver.classify();
        let d_in = dims.total(&class.inputs);
        let d_out = dims.total(&class.outputs);
        let (x0, y0) = &batch.samples()[0];
        if x0.len() != d_in {
            return Err(OptimError::BatchShape {
                index: 0,
                expected: d_in,
                got: x0.len(),
            });
        }
        if y0.len() != d_out {
            return Err(OptimError::BatchShape {
                index: 0,
                expected: d_out,
                got: y0.len(),
            });
        }
        Ok(Self {
            quiver,
            dims,
            activations,
            batch,
            cost,
        })
    }

    pub fn for_network(
        net: &'a QuiverNetwork,
        batch: &'a Batch,
        cost: Cost,
    ) -> Result<Self, OptimError> {
        Self::new(net.quiver(), net.dims(), net.activations(), batch, cost)
    }

    fn check_params(&self, params: &ParameterTuple) -> Result<(), OptimError> {
        if params.matrices().len() != self.quiver.edge_count() {
            return Err(OptimError::ParameterCount {
                expected: self.quiver.edge_count(),
                got: params.matrices().len(),
            });
        }
        Ok(())
    }

    /// `L(W) = sum_j C(F(x_j), y_j)`.
    pub fn loss(&self, params: &ParameterTuple) -> Result<f64, OptimError> {
        self.check_params(params)?;
        let total = crate::par::try_fold_chunks(
            self.batch.samples(),
            |(x, y)| {
                let trace = forward_trace(
                    self.quiver,
                    self.dims,
                    params.matrices(),
                    self.activations,
                    x,
                )?;
                let out = self.collect_output(&trace.features);
                Ok::<f64, OptimError>(self.cost.value(&out, y))
            },
            |a, b| a + b,
        )?;
        Ok(total.unwrap_or(0.0))
    }

    /// Full-batch gradient: per-sample reverse accumulation along the
    /// reversed topological order, accumulated over fixed-size sample
    /// chunks (chunk boundaries depend only on the batch length, keeping
    /// results identical across the parallel and sequential modes).
    pub fn gradient(&self, params: &ParameterTuple) -> Result<ParameterTuple, OptimError> {
        self.check_params(params)?;
        let total = crate::par::try_fold_chunks(
            self.batch.samples(),
            |(x, y)| self.sample_gradient(params, x, y),
            |mut a, b| {
                a.add_assign(b);
                a
            },
        )?;
        Ok(total.unwrap_or_else(|| self.zero_gradient()))
    }

    /// Gradient of the cost of a single `(x, y)` pair.
    pub fn sample_gradient(
        &self,
        params: &ParameterTuple,
        x: &[f64],
        y: &[f64],
    ) -> Result<ParameterTuple, OptimError> {
        let trace = forward_trace(
            self.quiver,
            self.dims,
            params.matrices(),
            self.activations,
            x,
        )?;
        let n = self.quiver.vertex_count();

        // dL/dF_i, filled backwards.
        let mut g: Vec<Vec<f64>> = (0..n)
            .map(|v| vec![0.0; self.dims.get(VertexId(v))])
            .collect();
        let class = self.quiver.classify();
        let mut off = 0;
        for &v in &class.outputs {
            let w = self.dims.get(v);
            g[v.0] = self.cost.gradient(&trace.features[v.0], &y[off..off + w]);
            off += w;
        }

        let mut grads: Vec<Matrix> = self
            .quiver
            .edges()
            .iter()
            .map(|e| Matrix::zeros(self.dims.get(e.target), self.dims.get(e.source)))
            .collect();

        for &v in self.quiver.topological_order().iter().rev() {
            if self.quiver.is_source(v) {
                continue;
            }
            let jac = self.activations[v.0].jacobian(&trace.preactivations[v.0])?;
            // u = J^T g: gradient w.r.t. the pre-activation sum.
            let u = jac.matvec_transposed(&g[v.0]);
            for &e in self.quiver.incoming_edges(v) {
                let edge = self.quiver.edges()[e];
                let f_src = &trace.features[edge.source.0];
                let gm = &mut grads[e];
                for (i, &ui) in u.iter().enumerate() {
                    if ui == 0.0 {
                        continue;
                    }
                    for (j, &fj) in f_src.iter().enumerate() {
                        gm[(i, j)] += ui * fj;
                    }
                }
                if !self.quiver.is_source(edge.source) {
                    let back = params.edge(e).matvec_transposed(&u);
                    for (gi, bi) in g[edge.source.0].iter_mut().zip(back) {
                        *gi += bi;
                    }
                }
            }
        }
        Ok(ParameterTuple(grads))
    }

    fn zero_gradient(&self) -> ParameterTuple {
        ParameterTuple(
            self.quiver
                .edges()
                .iter()
                .map(|e| Matrix::zeros(self.dims.get(e.target), self.dims.get(e.source)))
                .collect(),
        )
    }

    fn collect_output(&self, features: &[Vec<f64>]) -> Vec<f64> {
        let class = self.quiver.classify();
        let mut out = Vec::new();
        for &v in &class.outputs {
            out.extend_from_slice(&features[v.0]);
        }
        out
    }

    /// One step of gradient descent: `W - eta * grad L`.
    pub fn gd_step(&self, params: &ParameterTuple, lr: f64) -> Result<ParameterTuple, OptimError> {
        Ok(params.sub(&self.gradient(params)?.scale(lr)))
    }

    pub fn gd_steps(
        &self,
        params: &ParameterTuple,
        lr: f64,
        k: usize,
    ) -> Result<ParameterTuple, OptimError> {
        let mut cur = params.clone();
        for _ in 0..k {
            cur = self.gd_step(&cur, lr)?;
        }
        Ok(cur)
    }

    /// Projected gradient descent: a gradient step followed by zeroing the
    /// prescribed bottom-left blocks.
    pub fn pgd_step(
        &self,
        params: &ParameterTuple,
        lr: f64,
        reduced: &DimensionVector,
    ) -> Result<ParameterTuple, OptimError> {
        Ok(proj(
            self.quiver,
            self.dims,
            reduced,
            &self.gd_step(params, lr)?,
        ))
    }

    pub fn pgd_steps(
        &self,
        params: &ParameterTuple,
        lr: f64,
        reduced: &DimensionVector,
        k: usize,
    ) -> Result<ParameterTuple, OptimError> {
        let mut cur = params.clone();
        for _ in 0..k {
            cur = self.pgd_step(&cur, lr, reduced)?;
        }
        Ok(cur)
    }
}

/// Zeros the bottom-left `(d_t - d^red_t) x d^red_s` block of each entry;
/// all other entries pass through untouched.
pub fn proj(
    quiver: &NeuralQuiver,
    dims: &DimensionVector,
    reduced: &DimensionVector,
    params: &ParameterTuple,
) -> ParameterTuple {
    let entries = quiver
        .edges()
        .iter()
        .map(|e| {
            let mut m = params.edge(e.edge_id).clone();
            let rt = reduced.get(e.target);
            let cs = reduced.get(e.source);
            for i in rt..dims.get(e.target) {
                for j in 0..cs {
                    m[(i, j)] = 0.0;
                }
            }
            m
        })
        .collect();
    ParameterTuple(entries)
}

/// Largest magnitude found in the blocks that the interpolating space
/// requires to vanish; 0 means membership.
pub fn interpolating_defect(
    quiver: &NeuralQuiver,
    dims: &DimensionVector,
    reduced: &DimensionVector,
    params: &ParameterTuple,
) -> f64 {
    let mut worst = 0.0f64;
    for e in quiver.edges() {
        let m = params.edge(e.edge_id);
        for i in reduced.get(e.target)..dims.get(e.target) {
            for j in 0..reduced.get(e.source) {
                worst = worst.max(m[(i, j)].abs());
            }
        }
    }
    worst
}

/// Embeds reduced parameters into the interpolating space by padding each
/// entry with zero rows and columns (top-left placement).
pub fn iota2(
    quiver: &NeuralQuiver,
    dims: &DimensionVector,
    params: &ParameterTuple,
) -> ParameterTuple {
    let entries = quiver
        .edges()
        .iter()
        .map(|e| {
            let mut m = Matrix::zeros(dims.get(e.target), dims.get(e.source));
            m.set_block(0, 0, params.edge(e.edge_id));
            m
        })
        .collect();
    ParameterTuple(entries)
}

/// Extracts the top-left `d^red_t x d^red_s` block of each entry, the
/// retraction from the interpolating space onto the reduced parameters.
pub fn q2(
    quiver: &NeuralQuiver,
    reduced: &DimensionVector,
    params: &ParameterTuple,
) -> ParameterTuple {
    let entries = quiver
        .edges()
        .iter()
        .map(|e| {
            params
                .edge(e.edge_id)
                .block(0, reduced.get(e.target), 0, reduced.get(e.source))
        })
        .collect();
    ParameterTuple(entries)
}

/// `q1`: the retraction of the full parameter space onto the interpolating
/// space (identical to [`proj`]; the inclusion the other way is the
/// identity on representatives).
pub fn q1(
    quiver: &NeuralQuiver,
    dims: &DimensionVector,
    reduced: &DimensionVector,
    params: &ParameterTuple,
) -> ParameterTuple {
    proj(quiver, dims, reduced, params)
}

/// `iota1`: the inclusion of the interpolating space into the full
/// parameter space. Members are represented in full shape already, so
/// this is the identity on representatives; `proj = iota1 . q1`.
pub fn iota1(params: &ParameterTuple) -> ParameterTuple {
    params.clone()
}

/// The natural inclusion of reduced parameters into the full space,
/// `iota = iota1 . iota2`.
pub fn iota(
    quiver: &NeuralQuiver,
    dims: &DimensionVector,
    params: &ParameterTuple,
) -> ParameterTuple {
    iota2(quiver, dims, params)
}

/// Per-step deviations reported by [`verify_equivalence`].
#[derive(Debug, Clone)]
pub struct EquivalenceStep {
    pub step: usize,
    /// Infinity norm of `gamma^k(W) - Q . gamma^k(T)`.
    pub gd_conjugation: f64,
    /// Infinity norm of `gamma_proj^k(T) - (iota(gamma_red^k(W_red)) - iota(W_red) + T)`.
    pub pgd_reduction: f64,
}

/// Report of the compression/optimization equivalence checks.
#[derive(Debug, Clone)]
pub struct EquivalenceReport {
    pub steps: Vec<EquivalenceStep>,
}

impl EquivalenceReport {
    pub fn max_gd_conjugation(&self) -> f64 {
        self.steps.iter().fold(0.0, |m, s| m.max(s.gd_conjugation))
    }

    pub fn max_pgd_reduction(&self) -> f64 {
        self.steps.iter().fold(0.0, |m, s| m.max(s.pgd_reduction))
    }
}

/// Runs the compression pass on a radial network and tracks, for each step
/// up to `config.steps`, how far the two sides of the
/// compression/training equivalence drift apart:
/// `gamma^k(W) = Q . gamma^k(T)` and
/// `gamma_proj^k(T) = iota(gamma_red^k(W_red)) + T - iota(W_red)`
/// with `T = Q^-1 . W`. With `steps = 0` the report is empty and both
/// maxima are 0.
pub fn verify_equivalence(
    net: &QuiverNetwork,
    batch: &Batch,
    config: &GdConfig,
) -> Result<EquivalenceReport, OptimError> {
    for v in net.quiver().vertices() {
        if !net.quiver().is_source(v) && !net.activations()[v.0].is_radial() {
            return Err(OptimError::NotRadial(v));
        }
    }

    let quiver = net.quiver();
    let dims = net.dims();
    let compression = qr_compress(net)?;
    let reduced_net = &compression.reduced;
    let reduced_dims = reduced_net.dims();
    let q = OrthogonalTuple::new(compression.q_tuple.clone())?;

    let w = ParameterTuple::from_network(net);
    let w_red = ParameterTuple::from_network(reduced_net);
    let t = group_action(quiver, &q.inverse(), &w);

    let objective = Objective::new(quiver, dims, net.activations(), batch, config.cost)?;
    let objective_red = Objective::new(
        quiver,
        reduced_dims,
        reduced_net.activations(),
        batch,
        config.cost,
    )?;

    let lr = config.learning_rate;
    let mut w_cur = w;
    let mut t_cur = t.clone();
    let mut tp_cur = t.clone();
    let mut x_cur = w_red.clone();
    let mut steps = Vec::with_capacity(config.steps);

    for step in 1..=config.steps {
        w_cur = objective.gd_step(&w_cur, lr)?;
        t_cur = objective.gd_step(&t_cur, lr)?;
        tp_cur = objective.pgd_step(&tp_cur, lr, reduced_dims)?;
        x_cur = objective_red.gd_step(&x_cur, lr)?;

        let gd_conjugation = w_cur.max_abs_diff(&group_action(quiver, &q, &t_cur));
        // iota(x) - iota(w_red) + T, grouped so the k = 0 case is exact.
        let rhs = iota(quiver, dims, &x_cur)
            .sub(&iota(quiver, dims, &w_red))
            .add(&t);
        let pgd_reduction = tp_cur.max_abs_diff(&rhs);
        steps.push(EquivalenceStep {
            step,
            gd_conjugation,
            pgd_reduction,
        });
    }

    Ok(EquivalenceReport { steps })
}

/// Convenience: the reduced dimension vector used by `proj` and friends
/// for a network's own shape.
pub fn reduced_dims_of(net: &QuiverNetwork) -> DimensionVector {
    reduced_dimension_vector(net.quiver(), net.dims())
}
