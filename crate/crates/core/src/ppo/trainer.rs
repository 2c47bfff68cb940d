use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::TrainConfig;
use super::rollout::{EnvPool, EpisodeSummary};
use super::update::{ppo_update, UpdateStats};
use super::PpoError;
use crate::env::TaskSpec;
use crate::model::Network;
use crate::tensor::{Adam, AdamConfig};

/// Alternates rollout collection and PPO updates for one shared network.
pub struct Trainer {
    pub config: TrainConfig,
    pub network: Network,
    adam: Adam,
    pool: EnvPool,
    rng: ChaCha8Rng,
}

/// What one collect/update round produced.
#[derive(Debug, Clone)]
pub struct Iteration {
    pub episodes: Vec<EpisodeSummary>,
    pub stats: UpdateStats,
}

impl Trainer {
    pub fn new(spec: &TaskSpec, network: Network, config: TrainConfig, seed: u64) -> Result<Self, PpoError> {
        config.validate()?;
        let adam = Adam::new(
            network.params(),
            AdamConfig { learning_rate: config.learning_rate, ..AdamConfig::default() },
        );
        let mut pool = EnvPool::new(spec, config.n_envs, seed)?;
        if config.scale_rewards {
            pool = pool.with_reward_scaling(config.gamma_discount);
        }
        let rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x9e37_79b9));
        Ok(Self { config, network, adam, pool, rng })
    }

    pub fn spec(&self) -> &TaskSpec {
        self.pool.spec()
    }

    pub fn steps(&self) -> u64 {
        self.pool.steps
    }

    pub fn episodes(&self) -> u64 {
        self.pool.episodes
    }

    /// Restores counters when resuming from a checkpoint.
    pub fn set_progress(&mut self, steps: u64, episodes: u64) {
        self.pool.steps = steps;
        self.pool.episodes = episodes;
    }

    pub fn iterate(&mut self) -> Result<Iteration, PpoError> {
        let mut trajectory = self.pool.collect(&self.network, self.config.rollout_length)?;
        trajectory.finish(self.config.gamma_discount, self.config.gae_lambda)?;
        let stats = ppo_update(&mut self.network, &mut self.adam, &trajectory, &self.config, &mut self.rng)?;
        Ok(Iteration { episodes: trajectory.episodes, stats })
    }
}
