use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::controller::policy_step;
use super::gae::{compute_gae, normalize};
use super::scaling::RewardScaler;
use super::PpoError;
use crate::env::{observe_all, reset, step, success, Action, Observation, TaskSpec, WorldState};
use crate::model::{AgentGraph, Network};

/// One timestep of one environment, covering every agent.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub observations: Vec<Observation>,
    pub actions: Vec<usize>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub done: bool,
    /// Value of the final state when the episode was cut by the step limit;
    /// the return is bootstrapped from it instead of ending at zero.
    pub truncation_values: Option<Vec<f64>>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

/// Consecutive samples of one environment and the value of the state that
/// follows them.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Segment {
    pub samples: Vec<Sample>,
    pub bootstrap: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeSummary {
    pub steps: usize,
    /// Total reward divided by steps, averaged over agents.
    pub reward_per_step: f64,
    pub success: Option<bool>,
    /// Team that scored, for soccer.
    pub scored: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub graph: AgentGraph,
    pub segments: Vec<Segment>,
    /// Episodes that ended during collection.
    pub episodes: Vec<EpisodeSummary>,
}

impl Trajectory {
    /// Timesteps held, summed over environments.
    pub fn len(&self) -> usize {
        self.segments.iter().map(|s| s.samples.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn samples(&self) -> impl Iterator<Item = &Sample> {
        self.segments.iter().flat_map(|s| &s.samples)
    }

    /// Fills advantages and returns per agent, then normalizes the
    /// advantages over the whole buffer.
    pub fn finish(&mut self, gamma: f64, lambda: f64) -> Result<(), PpoError> {
        let n = self.graph.n();
        for seg in &mut self.segments {
            for s in &mut seg.samples {
                s.advantages = vec![0.0; n];
                s.returns = vec![0.0; n];
            }
            let dones: Vec<bool> = seg.samples.iter().map(|s| s.done).collect();
            for i in 0..n {
                let rewards: Vec<f64> = seg
                    .samples
                    .iter()
                    .map(|s| s.rewards[i] + s.truncation_values.as_ref().map_or(0.0, |v| gamma * v[i]))
                    .collect();
                let values: Vec<f64> = seg.samples.iter().map(|s| s.values[i]).collect();
                let (adv, ret) = compute_gae(&rewards, &values, &dones, seg.bootstrap[i], gamma, lambda)?;
                for (t, s) in seg.samples.iter_mut().enumerate() {
                    s.advantages[i] = adv[t];
                    s.returns[i] = ret[t];
                }
            }
        }
        let mut all: Vec<f64> = self.samples().flat_map(|s| s.advantages.iter().copied()).collect();
        normalize(&mut all);
        let mut it = all.into_iter();
        for seg in &mut self.segments {
            for s in &mut seg.samples {
                for a in &mut s.advantages {
                    *a = it.next().expect("advantage count is stable");
                }
            }
        }
        Ok(())
    }
}

struct Slot {
    state: WorldState,
    reward_sum: f64,
}

/// Environments stepped in lockstep. Episodes continue across rollouts and
/// restart with fresh seeds drawn from the pool's generator.
pub struct EnvPool {
    spec: TaskSpec,
    graph: AgentGraph,
    slots: Vec<Slot>,
    rng: ChaCha8Rng,
    scaler: Option<RewardScaler>,
    /// Environment steps taken so far, summed over slots.
    pub steps: u64,
    pub episodes: u64,
}

impl EnvPool {
    pub fn new(spec: &TaskSpec, n_envs: usize, seed: u64) -> Result<Self, PpoError> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let slots = (0..n_envs)
            .map(|_| Ok(Slot { state: reset(spec, rng.random())?, reward_sum: 0.0 }))
            .collect::<Result<_, PpoError>>()?;
        Ok(Self { spec: spec.clone(), graph: spec.graph(), slots, rng, scaler: None, steps: 0, episodes: 0 })
    }

    /// Stores rewards divided by a running return scale from now on.
    pub fn with_reward_scaling(mut self, gamma: f64) -> Self {
        self.scaler = Some(RewardScaler::new(self.slots.len() * self.spec.n_agents, gamma));
        self
    }

    pub fn spec(&self) -> &TaskSpec {
        &self.spec
    }

    /// Collects exactly `length` timesteps spread over the environments,
    /// sampling actions from `network`.
    pub fn collect(&mut self, network: &Network, length: usize) -> Result<Trajectory, PpoError> {
        let n_envs = self.slots.len();
        let quota: Vec<usize> = (0..n_envs).map(|k| length / n_envs + usize::from(k < length % n_envs)).collect();
        let mut segments = vec![Segment::default(); n_envs];
        let mut episodes = Vec::new();
        loop {
            let mut truncated: Vec<(usize, WorldState)> = Vec::new();
            let active: Vec<usize> = (0..n_envs).filter(|&k| segments[k].samples.len() < quota[k]).collect();
            if active.is_empty() {
                break;
            }
            let states: Vec<&WorldState> = active.iter().map(|&k| &self.slots[k].state).collect();
            let decision = policy_step(network, &self.spec, &self.graph, &states, Some(&mut self.rng))?;
            for (j, &k) in active.iter().enumerate() {
                let slot = &mut self.slots[k];
                let actions: Vec<Action> =
                    decision.actions[j].iter().map(|&a| Action::from_index(a).expect("valid action")).collect();
                let observations = observe_all(&self.spec, &slot.state);
                let t = step(&self.spec, &slot.state, &actions)?;
                slot.reward_sum += t.rewards.iter().sum::<f64>() / t.rewards.len() as f64;
                let n = t.rewards.len();
                let rewards = match &mut self.scaler {
                    Some(sc) => t.rewards.iter().enumerate().map(|(i, &r)| sc.scale(k * n + i, r, t.done)).collect(),
                    None => t.rewards.clone(),
                };
                segments[k].samples.push(Sample {
                    observations,
                    actions: decision.actions[j].clone(),
                    log_probs: decision.log_probs[j].clone(),
                    rewards,
                    values: decision.values[j].clone(),
                    done: t.done,
                    truncation_values: None,
                    advantages: Vec::new(),
                    returns: Vec::new(),
                });
                self.steps += 1;
                if t.done {
                    let steps = t.state.step_index;
                    episodes.push(EpisodeSummary {
                        steps,
                        reward_per_step: slot.reward_sum / steps as f64,
                        success: success(&self.spec, &t.state),
                        scored: t.info.scored,
                    });
                    self.episodes += 1;
                    if t.info.truncated {
                        truncated.push((k, t.state));
                    }
                    slot.state = reset(&self.spec, self.rng.random())?;
                    slot.reward_sum = 0.0;
                } else {
                    slot.state = t.state;
                }
            }
            if !truncated.is_empty() {
                let finals: Vec<&WorldState> = truncated.iter().map(|(_, s)| s).collect();
                let tail = policy_step(network, &self.spec, &self.graph, &finals, None)?;
                for ((k, _), values) in truncated.iter().zip(tail.values) {
                    if let Some(last) = segments[*k].samples.last_mut() {
                        last.truncation_values = Some(values);
                    }
                }
            }
        }
        let states: Vec<&WorldState> = self.slots.iter().map(|s| &s.state).collect();
        let tail = policy_step(network, &self.spec, &self.graph, &states, None)?;
        for (seg, values) in segments.iter_mut().zip(tail.values) {
            seg.bootstrap = values;
        }
        Ok(Trajectory { graph: self.graph.clone(), segments, episodes })
    }
}

/// One-off rollout from a fresh pool.
pub fn collect_rollout(
    spec: &TaskSpec,
    network: &Network,
    length: usize,
    n_envs: usize,
    seed: u64,
) -> Result<Trajectory, PpoError> {
    EnvPool::new(spec, n_envs, seed)?.collect(network, length)
}
