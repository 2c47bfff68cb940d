use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::reward::{coverage_reward, formation_reward, is_covered, opponent_goal, soccer_reward, SoccerEvent};
use super::spec::{Task, TaskSpec, BLUE, RED};
use super::{EnvError, Observation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Noop,
    PosX,
    NegX,
    PosY,
    NegY,
}

impl Action {
    pub const COUNT: usize = 5;
    pub const ALL: [Action; 5] = [Action::Noop, Action::PosX, Action::NegX, Action::PosY, Action::NegY];

    pub fn from_index(i: usize) -> Option<Action> {
        Self::ALL.get(i).copied()
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Unit acceleration direction.
    pub fn direction(self) -> [f64; 2] {
        match self {
            Action::Noop => [0.0, 0.0],
            Action::PosX => [1.0, 0.0],
            Action::NegX => [-1.0, 0.0],
            Action::PosY => [0.0, 1.0],
            Action::NegY => [0.0, -1.0],
        }
    }

    /// The same action seen through an x-mirror.
    pub fn mirrored_x(self) -> Action {
        match self {
            Action::PosX => Action::NegX,
            Action::NegX => Action::PosX,
            other => other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Body {
    pub pos: [f64; 2],
    pub vel: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub agents: Vec<Body>,
    pub teams: Vec<usize>,
    pub landmarks: Vec<[f64; 2]>,
    pub ball: Option<Body>,
    pub step_index: usize,
    pub done: bool,
    /// Seed the episode was reset from.
    pub seed: u64,
}

impl WorldState {
    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn positions(&self) -> Vec<[f64; 2]> {
        self.agents.iter().map(|b| b.pos).collect()
    }

    pub fn velocities(&self) -> Vec<[f64; 2]> {
        self.agents.iter().map(|b| b.vel).collect()
    }

    /// The same world with agents relabeled so that new agent `k` is old
    /// agent `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut out = self.clone();
        out.agents = perm.iter().map(|&p| self.agents[p]).collect();
        out.teams = perm.iter().map(|&p| self.teams[p]).collect();
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    /// Team that scored on this step, if any.
    pub scored: Option<usize>,
    /// Every landmark covered after this step (coverage only).
    pub covered: bool,
    /// The episode hit the step limit without reaching a terminal state.
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: WorldState,
    pub rewards: Vec<f64>,
    pub done: bool,
    pub info: StepInfo,
}

pub fn reset(spec: &TaskSpec, seed: u64) -> Result<WorldState, EnvError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = spec.physics.arena_half;
    let mut point = |half: f64| [rng.random_range(-half..=half), rng.random_range(-half..=half)];

    let agents = (0..spec.n_agents).map(|_| Body { pos: point(a), vel: [0.0; 2] }).collect();
    // Keep the whole formation inside the arena.
    let landmark_half = match spec.task {
        Task::Formation => (a - spec.outer_radius).max(0.0),
        _ => a,
    };
    let landmarks = match spec.task {
        Task::Soccer => vec![opponent_goal(spec, RED), opponent_goal(spec, BLUE)],
        _ => (0..spec.n_landmarks).map(|_| point(landmark_half)).collect(),
    };
    let ball = (spec.task == Task::Soccer).then(Body::default);

    Ok(WorldState { agents, teams: spec.teams(), landmarks, ball, step_index: 0, done: false, seed })
}

pub fn step(spec: &TaskSpec, state: &WorldState, actions: &[Action]) -> Result<Transition, EnvError> {
    if actions.len() != state.n_agents() {
        return Err(EnvError::ActionCount { expected: state.n_agents(), found: actions.len() });
    }
    if state.done {
        return Err(EnvError::EpisodeDone);
    }
    let p = &spec.physics;
    let n = state.n_agents();
    let mut forces = vec![[0.0f64; 2]; n];
    let gain = p.accel_unit * p.sensitivity * p.agent_mass;
    for (i, &action) in actions.iter().enumerate() {
        let action = if spec.is_competitive() && state.teams[i] == BLUE { action.mirrored_x() } else { action };
        let d = action.direction();
        forces[i] = [d[0] * gain, d[1] * gain];
    }

    for i in 0..n {
        for j in i + 1..n {
            if let Some(f) = contact(p.contact_stiffness, &state.agents[i], p.agent_radius, &state.agents[j], p.agent_radius) {
                add(&mut forces[i], f, 1.0);
                add(&mut forces[j], f, -1.0);
            }
        }
    }
    let mut ball_force = [0.0; 2];
    if let Some(ball) = &state.ball {
        for i in 0..n {
            if let Some(f) = contact(p.contact_stiffness, &state.agents[i], p.agent_radius, ball, p.ball_radius) {
                add(&mut forces[i], f, 1.0);
                add(&mut ball_force, f, -1.0);
            }
        }
    }

    let mut next = state.clone();
    for (body, f) in next.agents.iter_mut().zip(&forces) {
        integrate(body, *f, p.agent_mass, p.agent_max_speed, p.arena_half, p.dt, p.damping);
    }
    if let Some(ball) = &mut next.ball {
        integrate(ball, ball_force, p.ball_mass, p.ball_max_speed, p.arena_half, p.dt, p.damping);
    }
    next.step_index += 1;

    let mut info = StepInfo { scored: None, covered: false, truncated: false };
    let (rewards, terminal) = match spec.task {
        Task::Coverage => {
            info.covered = is_covered(spec, &next);
            (coverage_reward(spec, &next), info.covered)
        }
        Task::Formation => (formation_reward(spec, &next), false),
        Task::Soccer => {
            let (rewards, event) = soccer_reward(spec, state, &next);
            if let SoccerEvent::Goal { scorer } = event {
                info.scored = Some(scorer);
            }
            (rewards, info.scored.is_some())
        }
    };
    info.truncated = !terminal && next.step_index >= spec.max_episode_steps;
    next.done = terminal || info.truncated;
    Ok(Transition { done: next.done, state: next, rewards, info })
}

/// Observation of agent `i`. In soccer, blue agents see the world mirrored
/// in x so both teams attack +x in their own frame, and the goal an agent
/// attacks is always its first entity.
pub fn observe(spec: &TaskSpec, state: &WorldState, i: usize) -> Observation {
    let blue = spec.is_competitive() && state.teams[i] == BLUE;
    let sx = if blue { -1.0 } else { 1.0 };
    let me = &state.agents[i];
    let rel = |q: [f64; 2]| [sx * (q[0] - me.pos[0]), q[1] - me.pos[1]];
    let mut entities: Vec<[f64; 2]> = state.landmarks.iter().map(|&l| rel(l)).collect();
    if blue {
        entities.reverse();
    }
    if let Some(ball) = &state.ball {
        entities.push(rel(ball.pos));
    }
    Observation { agent: [sx * me.pos[0], me.pos[1], sx * me.vel[0], me.vel[1]], entities }
}

pub fn observe_all(spec: &TaskSpec, state: &WorldState) -> Vec<Observation> {
    (0..state.n_agents()).map(|i| observe(spec, state, i)).collect()
}

/// Repulsion on `a` from `b`, proportional to their overlap.
fn contact(stiffness: f64, a: &Body, ra: f64, b: &Body, rb: f64) -> Option<[f64; 2]> {
    let dx = a.pos[0] - b.pos[0];
    let dy = a.pos[1] - b.pos[1];
    let dist = dx.hypot(dy);
    let overlap = ra + rb - dist;
    (overlap > 0.0 && dist > 0.0).then(|| {
        let k = stiffness * overlap / dist;
        [k * dx, k * dy]
    })
}

fn add(acc: &mut [f64; 2], f: [f64; 2], sign: f64) {
    acc[0] += sign * f[0];
    acc[1] += sign * f[1];
}

fn integrate(body: &mut Body, force: [f64; 2], mass: f64, max_speed: f64, half: f64, dt: f64, damping: f64) {
    for k in 0..2 {
        body.vel[k] = (1.0 - damping) * body.vel[k] + force[k] / mass * dt;
    }
    let speed = body.vel[0].hypot(body.vel[1]);
    if speed > max_speed {
        let s = max_speed / speed;
        body.vel[0] *= s;
        body.vel[1] *= s;
    }
    for k in 0..2 {
        body.pos[k] = (body.pos[k] + body.vel[k] * dt).clamp(-half, half);
    }
}
