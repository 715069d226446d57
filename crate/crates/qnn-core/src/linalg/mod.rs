//! Dense real linear algebra: complete QR in the `Q * Inc * R` shape,
//! numerical rank, column-pivoting permutations, and left inverses.

mod matrix;
mod qr;
mod rank;

pub use matrix::Matrix;
pub use qr::{complete_qr, left_inverse, pivot_permutation, CompleteQR};
pub use rank::{numerical_rank, singular_values, svd, truncate_singular_values};

/// Errors from the linear-algebra layer.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LinalgError {
    #[error("matrix contains non-finite entries")]
    NonFiniteInput,
    #[error("no column permutation achieves rank {requested} (achieved {achieved})")]
    RankMismatch { requested: usize, achieved: usize },
    #[error("matrix does not have full column rank")]
    RankDeficient,
}
