use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use super::config::RunConfig;
use super::metrics::{MetricsRow, MetricsWriter};
use super::HarnessError;
use crate::model::Network;
use crate::ppo::{evaluate, EvalMetrics, PolicyController, Trainer, UniformController};

pub const METRICS_FILE: &str = "metrics.csv";
pub const LATEST_CHECKPOINT: &str = "checkpoint_latest.json";
pub const FINAL_CHECKPOINT: &str = "final.json";
pub const EVAL_FILE: &str = "eval.json";

/// Seed of the fixed evaluation episodes used throughout a run.
pub fn eval_seed(config: &RunConfig) -> u64 {
    config.seed.wrapping_add(0x0e7a_1000)
}

fn prepare_out_dir(dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let probe = dir.join(".write_probe");
    std::fs::write(&probe, b"").map_err(|e| HarnessError::io(&probe, e))?;
    std::fs::remove_file(&probe).map_err(|e| HarnessError::io(&probe, e))
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub final_checkpoint: PathBuf,
    pub metrics: PathBuf,
    pub evaluations: Vec<MetricsRow>,
    pub steps: u64,
    pub episodes: u64,
}

/// Trains until `config.train.total_steps` environment steps, evaluating
/// every `eval_every` episodes. With `resume`, training continues from the
/// checkpoint's parameters and counters.
pub fn run_train(config: &RunConfig, resume: Option<&Checkpoint>) -> Result<TrainSummary, HarnessError> {
    config.validate()?;
    prepare_out_dir(&config.out_dir)?;
    let spec = config.task_spec();
    let (network, steps, episodes) = match resume {
        Some(ck) => (ck.restore(config)?, ck.step, ck.episodes),
        None => (Network::new(config.model_spec(), config.seed)?, 0, 0),
    };
    let metrics_path = config.out_dir.join(METRICS_FILE);
    let mut metrics = MetricsWriter::open(&metrics_path)?;
    let mut trainer = Trainer::new(&spec, network, config.train.clone(), config.seed.wrapping_add(steps))?;
    trainer.set_progress(steps, episodes);

    let every = config.train.eval_every as u64;
    let mut next_eval = (episodes / every + 1) * every;
    let mut evaluations = Vec::new();
    while trainer.steps() < config.train.total_steps as u64 {
        let iteration = trainer.iterate()?;
        if trainer.episodes() < next_eval {
            continue;
        }
        while next_eval <= trainer.episodes() {
            next_eval += every;
        }
        let eval = evaluate(
            &spec,
            &mut PolicyController::greedy(&trainer.network, &spec),
            config.train.eval_episodes,
            eval_seed(config),
        )?;
        let s = iteration.stats;
        let row = MetricsRow {
            episode: trainer.episodes(),
            steps: trainer.steps(),
            mean_reward_per_step: eval.mean_reward_per_step,
            success_rate: eval.success_rate,
            mean_support_size: eval.mean_support,
            policy_loss: s.policy_loss,
            value_loss: s.value_loss,
            entropy: s.entropy,
            clip_fraction: s.clip_fraction,
        };
        metrics.write(&row)?;
        evaluations.push(row);
        Checkpoint::new(config, &trainer.network, trainer.steps(), trainer.episodes())
            .save(&config.out_dir.join(LATEST_CHECKPOINT))?;
    }
    let final_checkpoint = config.out_dir.join(FINAL_CHECKPOINT);
    Checkpoint::new(config, &trainer.network, trainer.steps(), trainer.episodes()).save(&final_checkpoint)?;
    Ok(TrainSummary {
        final_checkpoint,
        metrics: metrics_path,
        evaluations,
        steps: trainer.steps(),
        episodes: trainer.episodes(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub format_version: u32,
    pub episodes: usize,
    pub policy: EvalMetrics,
    /// Uniform-random actions on the same episodes.
    pub uniform: EvalMetrics,
}

impl EvalReport {
    /// Gap in mean reward per step between the policy and the uniform
    /// baseline, in units of the combined standard error.
    pub fn reward_margin(&self) -> f64 {
        let noise = self.policy.standard_error().hypot(self.uniform.standard_error());
        (self.policy.mean_reward_per_step - self.uniform.mean_reward_per_step) / noise
    }
}

/// Greedy evaluation of a checkpoint next to the uniform baseline. Writes
/// `eval.json` into the configured output directory.
pub fn run_eval(config: &RunConfig, checkpoint: &Checkpoint) -> Result<EvalReport, HarnessError> {
    config.validate()?;
    prepare_out_dir(&config.out_dir)?;
    let spec = config.task_spec();
    let network = checkpoint.restore(config)?;
    let n = config.train.eval_episodes;
    let seed = eval_seed(config);
    let policy = evaluate(&spec, &mut PolicyController::greedy(&network, &spec), n, seed)?;
    let uniform = evaluate(&spec, &mut UniformController::new(seed ^ 1), n, seed)?;
    let report = EvalReport { format_version: 1, episodes: n, policy, uniform };
    let path = config.out_dir.join(EVAL_FILE);
    std::fs::write(&path, serde_json::to_string_pretty(&report)?).map_err(|e| HarnessError::io(&path, e))?;
    Ok(report)
}
