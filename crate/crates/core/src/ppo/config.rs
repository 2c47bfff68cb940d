use serde::{Deserialize, Serialize};

use super::PpoError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub gamma_discount: f64,
    pub gae_lambda: f64,
    pub clip_epsilon: f64,
    pub ppo_epochs: usize,
    /// Minibatches per epoch, split over timesteps.
    pub minibatches: usize,
    pub learning_rate: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    /// Global gradient-norm clip; `None` disables it.
    pub max_grad_norm: Option<f64>,
    /// Divide rewards by a running standard deviation of the return.
    pub scale_rewards: bool,
    /// Timesteps per rollout, summed over the parallel environments.
    pub rollout_length: usize,
    /// Environments stepped in lockstep during collection.
    pub n_envs: usize,
    /// Evaluate after this many training episodes.
    pub eval_every: usize,
    pub eval_episodes: usize,
    /// Stop after this many environment steps.
    pub total_steps: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma_discount: 0.99,
            gae_lambda: 0.95,
            clip_epsilon: 0.2,
            ppo_epochs: 4,
            minibatches: 4,
            learning_rate: 3e-4,
            value_coef: 0.5,
            entropy_coef: 0.01,
            max_grad_norm: Some(0.5),
            scale_rewards: true,
            rollout_length: 4096,
            n_envs: 8,
            eval_every: 320,
            eval_episodes: 64,
            total_steps: 200_000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), PpoError> {
        let bad = |m: &str| Err(PpoError::Config(m.to_string()));
        if !(0.0..=1.0).contains(&self.gamma_discount) || !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gamma_discount and gae_lambda must lie in [0, 1]");
        }
        if !(self.clip_epsilon > 0.0) {
            return bad("clip_epsilon must be positive");
        }
        if self.ppo_epochs == 0 || self.minibatches == 0 || self.n_envs == 0 || self.eval_episodes == 0 {
            return bad("ppo_epochs, minibatches, n_envs and eval_episodes must be positive");
        }
        if self.rollout_length < self.n_envs.max(self.minibatches) {
            return bad("rollout_length must cover every environment and minibatch");
        }
        if !(self.learning_rate > 0.0) || self.value_coef < 0.0 || self.entropy_coef < 0.0 {
            return bad("learning_rate must be positive and loss coefficients non-negative");
        }
        if matches!(self.max_grad_norm, Some(c) if !(c > 0.0)) {
            return bad("max_grad_norm must be positive");
        }
        Ok(())
    }
}
