use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::policy::{argmax, log_softmax, sample};
use super::PpoError;
use crate::env::{observe, observe_all, Action, TaskSpec, WorldState};
use crate::model::{AgentGraph, AttentionMatrix, Network, SceneBatch};

/// Chooses a joint action for each of several worlds at once.
pub trait Controller {
    fn act(&mut self, spec: &TaskSpec, states: &[&WorldState]) -> Result<Vec<Vec<Action>>, PpoError>;

    /// Attention matrices behind the last decision, one list per world.
    fn attention(&self) -> Option<&[Vec<AttentionMatrix>]> {
        None
    }
}

/// Output of one batched policy evaluation.
#[derive(Debug, Clone)]
pub struct PolicyStep {
    pub actions: Vec<Vec<usize>>,
    pub log_probs: Vec<Vec<f64>>,
    pub values: Vec<Vec<f64>>,
    pub attention: Vec<Vec<AttentionMatrix>>,
}

/// Runs the shared network on every world. With `rng` actions are sampled,
/// otherwise the argmax is taken.
pub fn policy_step(
    network: &Network,
    spec: &TaskSpec,
    graph: &AgentGraph,
    states: &[&WorldState],
    rng: Option<&mut ChaCha8Rng>,
) -> Result<PolicyStep, PpoError> {
    let observations: Vec<_> = states.iter().map(|s| observe_all(spec, s)).collect();
    let scenes: Vec<_> = observations.iter().map(|o| (graph, o.as_slice())).collect();
    let batch = SceneBatch::from_scenes(&scenes)?;
    let inference = network.infer(&batch).map_err(|e| PpoError::Rollout {
        source: e,
        dump: serde_json::to_string(&observations).unwrap_or_default(),
    })?;
    let n = graph.n();
    let mut rng = rng;
    let mut out = PolicyStep {
        actions: Vec::with_capacity(states.len()),
        log_probs: Vec::with_capacity(states.len()),
        values: Vec::with_capacity(states.len()),
        attention: Vec::with_capacity(states.len()),
    };
    for s in 0..states.len() {
        let mut actions = Vec::with_capacity(n);
        let mut log_probs = Vec::with_capacity(n);
        for i in 0..n {
            let lp = log_softmax(inference.logits.row(s * n + i));
            let a = match rng.as_deref_mut() {
                Some(rng) => sample(&lp, rng),
                None => argmax(&lp),
            };
            actions.push(a);
            log_probs.push(lp[a]);
        }
        out.actions.push(actions);
        out.log_probs.push(log_probs);
        out.values.push(inference.values[s * n..(s + 1) * n].to_vec());
        out.attention.push(inference.scene_attention(s));
    }
    Ok(out)
}

fn to_actions(indices: Vec<usize>) -> Vec<Action> {
    indices.into_iter().map(|a| Action::from_index(a).expect("network emits valid actions")).collect()
}

/// Acts with a trained network, greedily or by sampling.
pub struct PolicyController<'a> {
    network: &'a Network,
    graph: AgentGraph,
    rng: Option<ChaCha8Rng>,
    last_attention: Vec<Vec<AttentionMatrix>>,
}

impl<'a> PolicyController<'a> {
    pub fn greedy(network: &'a Network, spec: &TaskSpec) -> Self {
        Self { network, graph: spec.graph(), rng: None, last_attention: Vec::new() }
    }

    pub fn sampling(network: &'a Network, spec: &TaskSpec, seed: u64) -> Self {
        Self { rng: Some(ChaCha8Rng::seed_from_u64(seed)), ..Self::greedy(network, spec) }
    }
}

impl Controller for PolicyController<'_> {
    fn act(&mut self, spec: &TaskSpec, states: &[&WorldState]) -> Result<Vec<Vec<Action>>, PpoError> {
        let step = policy_step(self.network, spec, &self.graph, states, self.rng.as_mut())?;
        self.last_attention = step.attention;
        Ok(step.actions.into_iter().map(to_actions).collect())
    }

    fn attention(&self) -> Option<&[Vec<AttentionMatrix>]> {
        Some(&self.last_attention)
    }
}

/// Parameter-free baseline drawing every action uniformly.
pub struct UniformController {
    rng: ChaCha8Rng,
}

impl UniformController {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl Controller for UniformController {
    fn act(&mut self, _spec: &TaskSpec, states: &[&WorldState]) -> Result<Vec<Vec<Action>>, PpoError> {
        Ok(states
            .iter()
            .map(|s| (0..s.n_agents()).map(|_| Action::ALL[self.rng.random_range(0..Action::COUNT)]).collect())
            .collect())
    }
}

pub struct NoopController;

impl Controller for NoopController {
    fn act(&mut self, _spec: &TaskSpec, states: &[&WorldState]) -> Result<Vec<Vec<Action>>, PpoError> {
        Ok(states.iter().map(|s| vec![Action::Noop; s.n_agents()]).collect())
    }
}

/// Hand-written soccer player: circles behind the ball and drives it
/// toward the goal it attacks. Works in each agent's own frame.
#[derive(Debug, Clone, Copy, Default)]
pub struct ScriptedStriker;

impl ScriptedStriker {
    fn choose(spec: &TaskSpec, state: &WorldState, i: usize) -> Action {
        let o = observe(spec, state, i);
        let Some(rel_ball) = o.entities.last() else { return Action::Noop };
        let p = [o.agent[0], o.agent[1]];
        let v = [o.agent[2], o.agent[3]];
        let ball = [p[0] + rel_ball[0], p[1] + rel_ball[1]];
        let goal = [spec.physics.arena_half, 0.0];
        let to_goal = [goal[0] - ball[0], goal[1] - ball[1]];
        let len = to_goal[0].hypot(to_goal[1]).max(1e-9);
        let u = [to_goal[0] / len, to_goal[1] / len];
        let perp = [-u[1], u[0]];

        let rel = [p[0] - ball[0], p[1] - ball[1]];
        let along = rel[0] * u[0] + rel[1] * u[1];
        let side = rel[0] * perp[0] + rel[1] * perp[1];
        let contact = spec.physics.ball_radius + spec.physics.agent_radius;
        let target = if along < -contact + 0.02 && side.abs() < 0.04 {
            [ball[0] + 0.3 * u[0], ball[1] + 0.3 * u[1]]
        } else if along < -contact {
            let back = contact + 0.05;
            [ball[0] - back * u[0], ball[1] - back * u[1]]
        } else {
            let s = if side >= 0.0 { 1.0 } else { -1.0 };
            let r = contact + 0.15;
            [ball[0] - r * u[0] + s * r * perp[0], ball[1] - r * u[1] + s * r * perp[1]]
        };

        let gap = [target[0] - p[0], target[1] - p[1]];
        let d = gap[0].hypot(gap[1]);
        let want = if d < 0.02 {
            [0.0, 0.0]
        } else {
            let speed = (3.0 * d).clamp(0.5, 1.0);
            [speed * gap[0] / d, speed * gap[1] / d]
        };
        // Pick the action whose next velocity lands closest to `want`.
        let ph = &spec.physics;
        let kick = ph.accel_unit * ph.sensitivity * ph.dt;
        let miss = |a: Action| {
            let d = a.direction();
            let next = [(1.0 - ph.damping) * v[0] + kick * d[0], (1.0 - ph.damping) * v[1] + kick * d[1]];
            (next[0] - want[0]).hypot(next[1] - want[1])
        };
        Action::ALL.into_iter().min_by(|a, b| miss(*a).total_cmp(&miss(*b))).unwrap_or(Action::Noop)
    }
}

impl Controller for ScriptedStriker {
    fn act(&mut self, spec: &TaskSpec, states: &[&WorldState]) -> Result<Vec<Vec<Action>>, PpoError> {
        Ok(states.iter().map(|s| (0..s.n_agents()).map(|i| Self::choose(spec, s, i)).collect()).collect())
    }
}

/// Red agents follow one controller, blue agents the other.
pub struct Matchup<'a> {
    pub red: &'a mut dyn Controller,
    pub blue: &'a mut dyn Controller,
}

impl Controller for Matchup<'_> {
    fn act(&mut self, spec: &TaskSpec, states: &[&WorldState]) -> Result<Vec<Vec<Action>>, PpoError> {
        let red = self.red.act(spec, states)?;
        let blue = self.blue.act(spec, states)?;
        Ok(states
            .iter()
            .zip(red.into_iter().zip(blue))
            .map(|(s, (r, b))| {
                s.teams.iter().enumerate().map(|(i, &t)| if t == crate::env::RED { r[i] } else { b[i] }).collect()
            })
            .collect())
    }
}
