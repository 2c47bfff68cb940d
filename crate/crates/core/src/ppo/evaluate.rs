use std::collections::BTreeMap;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::controller::Controller;
use super::rollout::EpisodeSummary;
use super::PpoError;
use crate::env::{reset, step, success, TaskSpec, WorldState};
use crate::model::{AgentGraph, AttentionMatrix, Relation};
use crate::tensor::Matrix;

/// Running statistics over recorded attention matrices.
#[derive(Debug, Clone, Default)]
pub struct AttentionSummary {
    support_total: usize,
    rows: usize,
    max_support: usize,
    sums: BTreeMap<(usize, Relation, usize), (Matrix, usize)>,
}

impl AttentionSummary {
    pub fn record(&mut self, graph: &AgentGraph, matrices: &[AttentionMatrix]) {
        for m in matrices {
            for s in m.row_supports(graph) {
                self.support_total += s;
                self.rows += 1;
                self.max_support = self.max_support.max(s);
            }
            let entry = self
                .sums
                .entry((m.hop, m.relation, m.head))
                .or_insert_with(|| (Matrix::zeros(m.weights.rows(), m.weights.cols()), 0));
            entry.0.add_assign(&m.weights);
            entry.1 += 1;
        }
    }

    pub fn mean_support(&self) -> Option<f64> {
        (self.rows > 0).then(|| self.support_total as f64 / self.rows as f64)
    }

    pub fn max_support(&self) -> Option<usize> {
        (self.rows > 0).then_some(self.max_support)
    }

    /// Element-wise mean of every recorded matrix, per (hop, relation, head).
    pub fn mean_adjacency(&self) -> Vec<AttentionMatrix> {
        self.sums
            .iter()
            .map(|(&(hop, relation, head), (sum, count))| AttentionMatrix {
                hop,
                relation,
                head,
                weights: sum.map(|x| x / *count as f64),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub episodes: usize,
    pub mean_reward_per_step: f64,
    /// Per-episode reward per step, in episode order.
    pub episode_rewards: Vec<f64>,
    pub success_rate: Option<f64>,
    pub mean_support: Option<f64>,
    pub max_support: Option<usize>,
    pub mean_adjacency: Vec<AttentionMatrix>,
}

impl EvalMetrics {
    /// Standard error of `mean_reward_per_step` across episodes.
    pub fn standard_error(&self) -> f64 {
        let n = self.episode_rewards.len() as f64;
        if n < 2.0 {
            return 0.0;
        }
        let mean = self.episode_rewards.iter().sum::<f64>() / n;
        let var = self.episode_rewards.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    }
}

/// Plays one episode per seed, up to `parallel` at a time, and returns the
/// summaries in seed order.
pub fn run_episodes(
    spec: &TaskSpec,
    controller: &mut dyn Controller,
    seeds: &[u64],
    parallel: usize,
    mut attention: Option<&mut AttentionSummary>,
) -> Result<Vec<EpisodeSummary>, PpoError> {
    let graph = spec.graph();
    let mut out = Vec::with_capacity(seeds.len());
    for chunk in seeds.chunks(parallel.max(1)) {
        let mut states: Vec<WorldState> = chunk.iter().map(|&s| reset(spec, s)).collect::<Result<_, _>>()?;
        let mut totals = vec![0.0; chunk.len()];
        let mut scored = vec![None; chunk.len()];
        loop {
            let active: Vec<usize> = (0..states.len()).filter(|&k| !states[k].done).collect();
            if active.is_empty() {
                break;
            }
            let refs: Vec<&WorldState> = active.iter().map(|&k| &states[k]).collect();
            let actions = controller.act(spec, &refs)?;
            if let (Some(summary), Some(att)) = (attention.as_deref_mut(), controller.attention()) {
                for m in att {
                    summary.record(&graph, m);
                }
            }
            for (j, &k) in active.iter().enumerate() {
                let t = step(spec, &states[k], &actions[j])?;
                totals[k] += t.rewards.iter().sum::<f64>() / t.rewards.len() as f64;
                scored[k] = scored[k].or(t.info.scored);
                states[k] = t.state;
            }
        }
        for (k, s) in states.iter().enumerate() {
            out.push(EpisodeSummary {
                steps: s.step_index,
                reward_per_step: totals[k] / s.step_index as f64,
                success: success(spec, s),
                scored: scored[k],
            });
        }
    }
    Ok(out)
}

/// Seeds of `n` evaluation episodes derived from `seed`.
pub fn episode_seeds(seed: u64, n: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random()).collect()
}

/// Evaluates `controller` on `n_episodes` seeded episodes.
pub fn evaluate(
    spec: &TaskSpec,
    controller: &mut dyn Controller,
    n_episodes: usize,
    seed: u64,
) -> Result<EvalMetrics, PpoError> {
    if n_episodes == 0 {
        return Err(PpoError::Config("n_episodes must be at least 1".into()));
    }
    let mut attention = AttentionSummary::default();
    let episodes = run_episodes(spec, controller, &episode_seeds(seed, n_episodes), 64, Some(&mut attention))?;
    let steps: usize = episodes.iter().map(|e| e.steps).sum();
    let total: f64 = episodes.iter().map(|e| e.reward_per_step * e.steps as f64).sum();
    let successes: Vec<bool> = episodes.iter().filter_map(|e| e.success).collect();
    Ok(EvalMetrics {
        episodes: n_episodes,
        mean_reward_per_step: total / steps as f64,
        episode_rewards: episodes.iter().map(|e| e.reward_per_step).collect(),
        success_rate: (!successes.is_empty())
            .then(|| successes.iter().filter(|&&s| s).count() as f64 / successes.len() as f64),
        mean_support: attention.mean_support(),
        max_support: attention.max_support(),
        mean_adjacency: attention.mean_adjacency(),
    })
}
