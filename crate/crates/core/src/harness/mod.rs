//! Run orchestration behind the command-line tool: configuration,
//! training, checkpoints, competitions and attention dumps.

mod checkpoint;
mod compete;
mod config;
mod dump;
mod metrics;
mod train;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::env::EnvError;
use crate::model::ModelError;
use crate::ppo::PpoError;

pub use checkpoint::{Checkpoint, NamedArray, CHECKPOINT_VERSION};
pub use compete::{
    compete, run_compete, CompetitionCell, CompetitionReport, COMPETITION_FILE, COMPETITION_VERSION,
};
pub use config::RunConfig;
pub use dump::{
    dump_graph, dump_network, read_adjacency, AdjacencyRecord, DumpFiles, DumpSummary, ADJACENCY_FILE, DUMP_VERSION,
    SUMMARY_FILE, TRACE_FILE,
};
pub use metrics::{read_metrics, MetricsRow, MetricsWriter, METRICS_VERSION};
pub use train::{
    eval_seed, run_eval, run_train, EvalReport, TrainSummary, EVAL_FILE, FINAL_CHECKPOINT, LATEST_CHECKPOINT,
    METRICS_FILE,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config{}: {message}", line.map(|l| format!(" line {l}")).unwrap_or_default())]
    Config { line: Option<usize>, message: String },
    #[error("unsupported checkpoint format_version {} (supported: {supported})", found.map_or("missing".to_string(), |v| v.to_string()))]
    Version { found: Option<u64>, supported: u32 },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("parameter `{name}` has shape {found:?} in the checkpoint but the config expects {expected:?}")]
    ShapeMismatch { name: String, expected: (usize, usize), found: [usize; 2] },
    #[error("checkpoint lacks parameter `{0}`")]
    MissingParam(String),
    #[error("checkpoint has parameter `{0}` that the config does not define")]
    UnknownParam(String),
    #[error("task mismatch: {0}")]
    TaskMismatch(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Ppo(#[from] PpoError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }
}

impl From<csv::Error> for HarnessError {
    fn from(e: csv::Error) -> Self {
        Self::Csv(e.to_string())
    }
}
