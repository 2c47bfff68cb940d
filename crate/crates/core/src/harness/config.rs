use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::env::{Task, TaskSpec};
use crate::model::ModelSpec;
use crate::ppo::TrainConfig;

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub task: Task,
    pub n_agents: usize,
    /// Coverage only; defaults to `n_agents`.
    pub n_landmarks: Option<usize>,
    pub max_episode_steps: Option<usize>,
    pub model: ModelSpec,
    pub train: TrainConfig,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Environment steps rolled out by `dump-graph`.
    pub dump_steps: usize,
    /// Episodes per `compete` pairing.
    pub compete_episodes: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            task: Task::Coverage,
            n_agents: 3,
            n_landmarks: None,
            max_episode_steps: None,
            model: ModelSpec::default(),
            train: TrainConfig::default(),
            seed: 0,
            out_dir: PathBuf::from("runs/default"),
            dump_steps: 50,
            compete_episodes: 50,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, String> {
    value.parse().map_err(|_| format!("invalid value `{value}` for `{key}`"))
}

impl RunConfig {
    pub fn task_spec(&self) -> TaskSpec {
        let mut spec = TaskSpec::for_task(self.task, self.n_agents);
        if let (Task::Coverage, Some(l)) = (self.task, self.n_landmarks) {
            spec.n_landmarks = l;
        }
        if let Some(steps) = self.max_episode_steps {
            spec.max_episode_steps = steps;
        }
        spec
    }

    /// The model spec with the relation structure the task requires.
    pub fn model_spec(&self) -> ModelSpec {
        ModelSpec { relational: self.task == Task::Soccer, ..self.model.clone() }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let invalid = |m: String| HarnessError::Config { line: None, message: m };
        self.task_spec().validate().map_err(|e| invalid(e.to_string()))?;
        self.model_spec().validate().map_err(invalid)?;
        self.train.validate().map_err(|e| invalid(e.to_string()))?;
        if self.compete_episodes == 0 {
            return Err(invalid("compete_episodes must be positive".into()));
        }
        Ok(())
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let m = &mut self.model;
        let t = &mut self.train;
        match key {
            "task" => self.task = value.parse()?,
            "n_agents" => self.n_agents = parse(key, value)?,
            "n_landmarks" => self.n_landmarks = Some(parse(key, value)?),
            "max_episode_steps" => self.max_episode_steps = Some(parse(key, value)?),
            "seed" => self.seed = parse(key, value)?,
            "out" => self.out_dir = PathBuf::from(value),
            "dump_steps" => self.dump_steps = parse(key, value)?,
            "compete_episodes" => self.compete_episodes = parse(key, value)?,
            "activation" => m.activation = value.parse()?,
            "embed_dim" => m.embed_dim = parse(key, value)?,
            "key_dim" => m.key_dim = parse(key, value)?,
            "hops" => m.hops = parse(key, value)?,
            "heads" => m.heads = parse(key, value)?,
            "head_hidden" => m.head_hidden = parse(key, value)?,
            "gate_phi1" => m.gate.phi1 = parse(key, value)?,
            "gate_phi2" => m.gate.phi2 = parse(key, value)?,
            "gate_psi" => m.gate.psi = parse(key, value)?,
            "gamma_discount" => t.gamma_discount = parse(key, value)?,
            "gae_lambda" => t.gae_lambda = parse(key, value)?,
            "clip_epsilon" => t.clip_epsilon = parse(key, value)?,
            "ppo_epochs" => t.ppo_epochs = parse(key, value)?,
            "minibatches" => t.minibatches = parse(key, value)?,
            "learning_rate" => t.learning_rate = parse(key, value)?,
            "value_coef" => t.value_coef = parse(key, value)?,
            "entropy_coef" => t.entropy_coef = parse(key, value)?,
            "max_grad_norm" => {
                t.max_grad_norm = if value == "none" { None } else { Some(parse(key, value)?) };
            }
            "scale_rewards" => t.scale_rewards = parse(key, value)?,
            "rollout_length" => t.rollout_length = parse(key, value)?,
            "n_envs" => t.n_envs = parse(key, value)?,
            "eval_every" => t.eval_every = parse(key, value)?,
            "eval_episodes" => t.eval_episodes = parse(key, value)?,
            "total_steps" => t.total_steps = parse(key, value)?,
            other => return Err(format!("unknown key `{other}`")),
        }
        Ok(())
    }

    /// Parses `key = value` lines over the defaults. `#` starts a comment.
    pub fn parse_text(text: &str) -> Result<Self, HarnessError> {
        let mut config = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| HarnessError::Config { line: Some(i + 1), message };
            let (key, value) = line.split_once('=').ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            config.set(key.trim(), value.trim()).map_err(err)?;
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::parse_text(&text)
    }
}
