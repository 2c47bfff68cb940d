//! Dense matrices, a tape-based reverse-mode differentiation graph, and Adam.

mod adam;
mod graph;
mod linear;
mod matrix;
mod params;

pub use adam::{Adam, AdamConfig};
pub use graph::{Axis, CustomOp, Graph, Result, TensorError, TensorId};
pub use linear::Linear;
pub use matrix::Matrix;
pub use params::{ParamId, ParamStore, Parameter};
