//! Simplex-valued attention normalizers: softmax, sparsemax (Euclidean
//! projection onto the probability simplex), and the adaptive gated map
//! whose sparsity is learned.

mod gate;
mod simplex;

use thiserror::Error;

use crate::tensor::TensorError;

pub use gate::{
    adaptive_sparse, adaptive_sparse_rows, positive_reparam, BoundGate, GateFn, GateWidths, IdentityGate,
    MonotoneGate, SoftmaxGate, SparsityScale, STRICTNESS_SLOPE,
};
pub use simplex::{
    project_simplex, softmax, sparsemax, sparsemax_backward, MaskedNormalize, Normalizer, SimplexVector,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ActivationError {
    #[error("non-finite entry {value} at index {index}")]
    NonFinite { index: usize, value: f64 },
    #[error("empty input vector")]
    Empty,
    #[error("expected a vector of length {expected}, found {found}")]
    Length { expected: usize, found: usize },
    #[error("simplex vector has an empty support")]
    EmptySupport,
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T> = std::result::Result<T, ActivationError>;
