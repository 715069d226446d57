//! Neural quivers: validated DAGs with a distinguished bias vertex,
//! deterministic topological ordering, vertex classification, and reduced
//! dimension vectors.

use std::collections::BinaryHeap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Index of a vertex; dense in `[0, vertex_count)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VertexId(pub usize);

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

/// Directed edge. Parallel edges between the same vertex pair are allowed
/// and distinguished by `edge_id`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub source: VertexId,
    pub target: VertexId,
    pub edge_id: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum QuiverError {
    #[error("quiver has no vertices")]
    EmptyQuiver,
    #[error("edge {edge_id} references vertex {vertex} outside [0, {vertex_count})")]
    InvalidVertex {
        edge_id: usize,
        vertex: usize,
        vertex_count: usize,
    },
    #[error("directed cycle detected")]
    CycleDetected,
    #[error("bias vertex {0} has incoming edges")]
    BiasNotSource(VertexId),
    #[error("removing the bias vertex turns {0} into a source")]
    BiasRemovalCreatesSource(VertexId),
    #[error("underlying undirected graph is disconnected")]
    Disconnected,
}

/// A connected acyclic quiver with a distinguished bias source whose
/// removal creates no new sources. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuralQuiver {
    vertex_count: usize,
    edges: Vec<Edge>,
    bias: VertexId,
    /// Incoming edge ids per vertex, ascending.
    incoming: Vec<Vec<usize>>,
    /// Outgoing edge ids per vertex, ascending.
    outgoing: Vec<Vec<usize>>,
}

impl NeuralQuiver {
    /// Validates the neural-quiver invariants and builds the adjacency
    /// index. Edges are `(source, target)` pairs; their position in the
    /// slice becomes the edge id.
    pub fn new(
        vertex_count: usize,
        edge_pairs: &[(usize, usize)],
        bias: usize,
    ) -> Result<Self, QuiverError> {
        if vertex_count == 0 {
            return Err(QuiverError::EmptyQuiver);
        }
        for (edge_id, &(s, t)) in edge_pairs.iter().enumerate() {
            for v in [s, t] {
                if v >= vertex_count {
                    return Err(QuiverError::InvalidVertex {
                        edge_id,
                        vertex: v,
                        vertex_count,
                    });
                }
            }
        }
        if bias >= vertex_count {
            return Err(QuiverError::InvalidVertex {
                edge_id: usize::MAX,
                vertex: bias,
                vertex_count,
            });
        }

        let edges: Vec<Edge> = edge_pairs
            .iter()
            .enumerate()
            .map(|(edge_id, &(s, t))| Edge {
                source: VertexId(s),
                target: VertexId(t),
                edge_id,
            })
            .collect();

        let mut incoming = vec![Vec::new(); vertex_count];
        let mut outgoing = vec![Vec::new(); vertex_count];
        for e in &edges {
            incoming[e.target.0].push(e.edge_id);
            outgoing[e.source.0].push(e.edge_id);
        }

        let q = Self {
            vertex_count,
            edges,
            bias: VertexId(bias),
            incoming,
            outgoing,
        };

        // Acyclicity: Kahn's algorithm must consume every vertex.
        if q.kahn_order().len() != vertex_count {
            return Err(QuiverError::CycleDetected);
        }
        if !q.incoming[bias].is_empty() {
            return Err(QuiverError::BiasNotSource(VertexId(bias)));
        }
        // Removing the bias must create no new sources: every vertex with
        // incoming edges needs at least one from a non-bias vertex.
        for v in 0..vertex_count {
            let ins = &q.incoming[v];
            if !ins.is_empty() && ins.iter().all(|&e| q.edges[e].source.0 == bias) {
                return Err(QuiverError::BiasRemovalCreatesSource(VertexId(v)));
            }
        }
        if !q.is_connected() {
            return Err(QuiverError::Disconnected);
        }
        Ok(q)
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn bias(&self) -> VertexId {
        self.bias
    }

    /// Incoming edge ids of `v`, ascending.
    pub fn incoming_edges(&self, v: VertexId) -> &[usize] {
        &self.incoming[v.0]
    }

    pub fn is_source(&self, v: VertexId) -> bool {
        self.incoming[v.0].is_empty()
    }

    pub fn is_sink(&self, v: VertexId) -> bool {
        self.outgoing[v.0].is_empty()
    }

    pub fn is_hidden(&self, v: VertexId) -> bool {
        !self.is_source(v) && !self.is_sink(v)
    }

    pub fn vertices(&self) -> impl Iterator<Item = VertexId> {
        (0..self.vertex_count).map(VertexId)
    }

    /// True if some vertex pair is connected by more than one edge.
    pub fn has_parallel_edges(&self) -> bool {
        let mut seen = std::collections::HashSet::new();
        self.edges
            .iter()
            .any(|e| !seen.insert((e.source.0, e.target.0)))
    }

    /// Deterministic topological order: Kahn's algorithm with ties broken
    /// by smallest vertex id.
    pub fn topological_order(&self) -> Vec<VertexId> {
        self.kahn_order()
    }

    fn kahn_order(&self) -> Vec<VertexId> {
        let mut indegree: Vec<usize> = self.incoming.iter().map(|v| v.len()).collect();
        // Min-heap via Reverse.
        let mut ready: BinaryHeap<std::cmp::Reverse<usize>> = (0..self.vertex_count)
            .filter(|&v| indegree[v] == 0)
            .map(std::cmp::Reverse)
            .collect();
        let mut order = Vec::with_capacity(self.vertex_count);
        while let Some(std::cmp::Reverse(v)) = ready.pop() {
            order.push(VertexId(v));
            for &e in &self.outgoing[v] {
                let t = self.edges[e].target.0;
                indegree[t] -= 1;
                if indegree[t] == 0 {
                    ready.push(std::cmp::Reverse(t));
                }
            }
        }
        order
    }

    fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.vertex_count];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            let neighbors = self.outgoing[v]
                .iter()
                .map(|&e| self.edges[e].target.0)
                .chain(self.incoming[v].iter().map(|&e| self.edges[e].source.0));
            for n in neighbors {
                if !seen[n] {
                    seen[n] = true;
                    count += 1;
                    stack.push(n);
                }
            }
        }
        count == self.vertex_count
    }

    /// Partition of the vertex set into bias, inputs, outputs, hidden.
    pub fn classify(&self) -> VertexClassification {
        let mut inputs = Vec::new();
        let mut outputs = Vec::new();
        let mut hidden = Vec::new();
        for v in self.vertices() {
            if v == self.bias {
                continue;
            } else if self.is_source(v) {
                inputs.push(v);
            } else if self.is_sink(v) {
                outputs.push(v);
            } else {
                hidden.push(v);
            }
        }
        VertexClassification {
            inputs,
            outputs,
            hidden,
            bias: self.bias,
        }
    }
}

/// Vertex partition: non-bias sources are inputs, sinks are outputs, the
/// rest (minus the bias) is hidden. Each list is sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VertexClassification {
    pub inputs: Vec<VertexId>,
    pub outputs: Vec<VertexId>,
    pub hidden: Vec<VertexId>,
    pub bias: VertexId,
}

/// Per-vertex feature widths; the bias width is always 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DimensionVector(Vec<usize>);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DimensionError {
    #[error("expected {expected} dimensions, got {got}")]
    WrongLength { expected: usize, got: usize },
    #[error("dimension at vertex {0} must be positive")]
    ZeroDimension(VertexId),
    #[error("bias vertex {0} must have dimension 1, got {1}")]
    BiasWidth(VertexId, usize),
}

impl DimensionVector {
    pub fn new(q: &NeuralQuiver, dims: Vec<usize>) -> Result<Self, DimensionError> {
        if dims.len() != q.vertex_count() {
            return Err(DimensionError::WrongLength {
                expected: q.vertex_count(),
                got: dims.len(),
            });
        }
        for (v, &d) in dims.iter().enumerate() {
            if d == 0 {
                return Err(DimensionError::ZeroDimension(VertexId(v)));
            }
        }
        if dims[q.bias().0] != 1 {
            return Err(DimensionError::BiasWidth(q.bias(), dims[q.bias().0]));
        }
        Ok(Self(dims))
    }

    pub fn get(&self, v: VertexId) -> usize {
        self.0[v.0]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    /// Sum over a vertex list, e.g. total input or output width.
    pub fn total(&self, vs: &[VertexId]) -> usize {
        vs.iter().map(|&v| self.get(v)).sum()
    }
}

/// Sum of dimensions over the sources of all incoming edges (parallel
/// edges counted once each); 0 for sources.
pub fn incoming_dimension(q: &NeuralQuiver, d: &DimensionVector, i: VertexId) -> usize {
    q.incoming_edges(i)
        .iter()
        .map(|&e| d.get(q.edges()[e].source))
        .sum()
}

/// The reduced dimension vector: sources and sinks keep their width, every
/// other vertex gets `min(d_i, sum of reduced incoming widths)`, computed
/// along a topological order. The result is order-independent.
pub fn reduced_dimension_vector(q: &NeuralQuiver, d: &DimensionVector) -> DimensionVector {
    let mut red: Vec<usize> = d.as_slice().to_vec();
    for v in q.topological_order() {
        if q.is_source(v) || q.is_sink(v) {
            continue;
        }
        let inc: usize = q
            .incoming_edges(v)
            .iter()
            .map(|&e| red[q.edges()[e].source.0])
            .sum();
        red[v.0] = d.get(v).min(inc);
    }
    DimensionVector(red)
}
