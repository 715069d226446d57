//! JSON model files: quiver topology, dimensions, activations, weights.
//!
//! Floats round-trip exactly (shortest representation that parses back to
//! the same bit pattern), so `parse . serialize . parse = parse`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;
use crate::network::{Activation, NetworkError, QuiverNetwork};
use crate::quiver::{DimensionError, DimensionVector, NeuralQuiver, QuiverError};

pub const FORMAT_VERSION: &str = "1";

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported format version {0:?} (expected {FORMAT_VERSION:?})")]
    Version(String),
    #[error(transparent)]
    Quiver(#[from] QuiverError),
    #[error(transparent)]
    Dimension(#[from] DimensionError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("weight entry for edge {0} is missing or duplicated")]
    WeightEntry(usize),
    #[error("weight entry references unknown edge {0}")]
    UnknownEdge(usize),
    #[error("weight entry for edge {edge}: data length {len} does not match {rows}x{cols}")]
    WeightData {
        edge: usize,
        rows: usize,
        cols: usize,
        len: usize,
    },
    #[error("activation entry for vertex {0} is missing, duplicated, or at a source vertex")]
    ActivationEntry(usize),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuiverSpec {
    pub vertex_count: usize,
    pub bias: usize,
    /// `[source, target]` pairs in edge-id order.
    pub edges: Vec<[usize; 2]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ActivationEntry {
    pub vertex: usize,
    #[serde(flatten)]
    pub activation: Activation,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightEntry {
    pub edge: usize,
    pub rows: usize,
    pub cols: usize,
    /// Row-major entries.
    pub data: Vec<f64>,
}

/// On-disk model document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: String,
    pub quiver: QuiverSpec,
    pub dims: Vec<usize>,
    /// One entry per non-source vertex, ascending.
    pub activations: Vec<ActivationEntry>,
    /// One entry per edge, ascending edge id.
    pub weights: Vec<WeightEntry>,
}

impl ModelFile {
    pub fn from_network(net: &QuiverNetwork) -> Self {
        let quiver = net.quiver();
        Self {
            format_version: FORMAT_VERSION.to_string(),
            quiver: QuiverSpec {
                vertex_count: quiver.vertex_count(),
                bias: quiver.bias().0,
                edges: quiver
                    .edges()
                    .iter()
                    .map(|e| [e.source.0, e.target.0])
                    .collect(),
            },
            dims: net.dims().as_slice().to_vec(),
            activations: quiver
                .vertices()
                .filter(|&v| !quiver.is_source(v))
                .map(|v| ActivationEntry {
                    vertex: v.0,
                    activation: net.activations()[v.0].clone(),
                })
                .collect(),
            weights: net
                .weights()
                .iter()
                .enumerate()
                .map(|(edge, m)| WeightEntry {
                    edge,
                    rows: m.rows(),
                    cols: m.cols(),
                    data: m.data().to_vec(),
                })
                .collect(),
        }
    }

    pub fn to_network(&self) -> Result<QuiverNetwork, ModelError> {
        if self.format_version != FORMAT_VERSION {
            return Err(ModelError::Version(self.format_version.clone()));
        }
        let edges: Vec<(usize, usize)> = self.quiver.edges.iter().map(|e| (e[0], e[1])).collect();
        let quiver = NeuralQuiver::new(self.quiver.vertex_count, &edges, self.quiver.bias)?;
        let dims = DimensionVector::new(&quiver, self.dims.clone())?;

        let mut weights: Vec<Option<Matrix>> = vec![None; quiver.edge_count()];
        for entry in &self.weights {
            if entry.edge >= quiver.edge_count() {
                return Err(ModelError::UnknownEdge(entry.edge));
            }
            if weights[entry.edge].is_some() {
                return Err(ModelError::WeightEntry(entry.edge));
            }
            if entry.data.len() != entry.rows * entry.cols {
                return Err(ModelError::WeightData {
                    edge: entry.edge,
                    rows: entry.rows,
                    cols: entry.cols,
                    len: entry.data.len(),
                });
            }
            weights[entry.edge] = Some(Matrix::from_row_major(
                entry.rows,
                entry.cols,
                entry.data.clone(),
            ));
        }
        let weights: Vec<Matrix> = weights
            .into_iter()
            .enumerate()
            .map(|(e, w)| w.ok_or(ModelError::WeightEntry(e)))
            .collect::<Result<_, _>>()?;

        let mut activations: Vec<Option<Activation>> = quiver
            .vertices()
            .map(|v| quiver.is_source(v).then_some(Activation::Identity))
            .collect();
        for entry in &self.activations {
            let v = entry.vertex;
            if v >= quiver.vertex_count()
                || quiver.is_source(crate::quiver::VertexId(v))
                || activations[v].is_some()
            {
                return Err(ModelError::ActivationEntry(v));
            }
            activations[v] = Some(entry.activation.clone());
        }
        let activations: Vec<Activation> = activations
            .into_iter()
            .enumerate()
            .map(|(v, a)| a.ok_or(ModelError::ActivationEntry(v)))
            .collect::<Result<_, _>>()?;

        Ok(QuiverNetwork::new(quiver, dims, weights, activations)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serialization cannot fail")
    }

    pub fn from_json(s: &str) -> Result<Self, ModelError> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Parse + validate a model file into a network in one step.
pub fn load_network(path: &Path) -> Result<QuiverNetwork, ModelError> {
    ModelFile::load(path)?.to_network()
}
