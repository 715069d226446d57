//! Quiver neural networks with rescaling activations: lossless QR-based
//! model compression, the orthogonal symmetry of parameter space, and the
//! equivalence between training the compressed model and projected
//! gradient descent on the original.
//!
//! A network lives on a *neural quiver* (a connected DAG with a
//! distinguished bias source), carries a width per vertex and a weight
//! matrix per edge, and applies a rescaling activation
//! `v -> lambda(v) * v` at every non-source vertex. Because rescaling
//! activations preserve subspaces, iterated QR decompositions along a
//! topological order shrink every hidden width to the reduced dimension
//! without changing the feedforward function; see [`compress`]. For radial
//! activations the same orthogonal factors tie gradient descent on the
//! compressed model to projected gradient descent on the original; see
//! [`optim`].
//!
//! With the default `parallel` feature, batch gradients and verification
//! trials fan out over rayon; disabling it runs the identical computation
//! sequentially (results are bit-for-bit the same).

pub mod compress;
pub mod generate;
pub mod linalg;
pub mod model;
pub mod network;
pub mod optim;
pub(crate) mod par;
pub mod quiver;
pub mod quiverrep;
pub mod rng;
pub mod verify;

pub use compress::{
    compress_change_of_basis, feedforward_equality, qr_compress, qr_compress_rank_aware,
    CompressionAlgorithm, CompressionResult,
};
pub use linalg::Matrix;
pub use network::{Activation, QuiverNetwork};
pub use optim::{Batch, Cost, GdConfig, Objective, OrthogonalTuple, ParameterTuple};
pub use quiver::{DimensionVector, NeuralQuiver, VertexId};
