//! Graph-attention policy/value network over the agent communication graph.

mod batch;
mod graph;
mod network;
mod spec;


use thiserror::Error;

use crate::tensor::TensorError;

pub use batch::SceneBatch;
pub use graph::{AgentGraph, AttentionMatrix, Relation};
pub use network::{AttentionHead, AttentionTrace, ForwardOutput, Inference, Network, ParamGroup};
pub use spec::{ActivationMode, ModelSpec};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid model spec: {0}")]
    Spec(String),
    #[error("observation width mismatch: expected {expected}, found {found}")]
    ObservationDim { expected: usize, found: usize },
    #[error("agent count mismatch: expected {expected}, found {found}")]
    AgentCount { expected: usize, found: usize },
    #[error("entity count mismatch: expected {expected}, found {found}")]
    EntityCount { expected: usize, found: usize },
    #[error("relational graph and network disagree")]
    RelationMismatch,
    #[error("empty batch")]
    EmptyBatch,
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}
