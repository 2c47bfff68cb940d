//! Proximal policy optimization with parameter sharing across agents.

mod config;
mod controller;
mod evaluate;
mod gae;
mod policy;
mod rollout;
mod scaling;
mod trainer;
mod update;


use thiserror::Error;

use crate::env::EnvError;
use crate::model::ModelError;
use crate::tensor::TensorError;

pub use config::TrainConfig;
pub use controller::{
    policy_step, Controller, Matchup, NoopController, PolicyController, PolicyStep, ScriptedStriker,
    UniformController,
};
pub use evaluate::{episode_seeds, evaluate, run_episodes, AttentionSummary, EvalMetrics};
pub use gae::{compute_gae, normalize};
pub use policy::{argmax, entropy, log_softmax, sample};
pub use rollout::{collect_rollout, EnvPool, EpisodeSummary, Sample, Segment, Trajectory};
pub use scaling::RewardScaler;
pub use trainer::{Iteration, Trainer};
pub use update::{policy_gradient, ppo_update, Objective, UpdateStats};

#[derive(Debug, Error)]
pub enum PpoError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("sequence lengths differ: {rewards} rewards, {values} values, {dones} done flags")]
    Length { rewards: usize, values: usize, dones: usize },
    #[error("rollout failed: {source}; observations: {dump}")]
    Rollout { source: ModelError, dump: String },
    #[error("trajectory is empty")]
    EmptyTrajectory,
    #[error("advantages have not been computed")]
    MissingAdvantages,
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}
