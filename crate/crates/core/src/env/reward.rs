use std::f64::consts::TAU;

use super::spec::{Task, TaskSpec, BLUE, RED};
use super::world::WorldState;

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn nearest_agent(state: &WorldState, p: [f64; 2]) -> f64 {
    state.agents.iter().map(|b| dist(b.pos, p)).fold(f64::INFINITY, f64::min)
}

/// Shared reward: minus the mean over landmarks of the closest agent
/// distance, minus the time penalty.
pub fn coverage_reward(spec: &TaskSpec, state: &WorldState) -> Vec<f64> {
    let total: f64 = state.landmarks.iter().map(|&l| nearest_agent(state, l)).sum();
    let r = -total / state.landmarks.len() as f64 - spec.time_penalty;
    vec![r; state.n_agents()]
}

/// Every landmark has an agent within the coverage tolerance (inclusive).
pub fn is_covered(spec: &TaskSpec, state: &WorldState) -> bool {
    state.landmarks.iter().all(|&l| nearest_agent(state, l) <= spec.coverage_tolerance)
}

/// Ring assignment and per-agent geometry for the formation task.
#[derive(Debug, Clone, PartialEq)]
pub struct FormationLayout {
    /// Agent indices of the inner and outer sub-teams.
    pub rings: [Vec<usize>; 2],
    pub radii: [f64; 2],
}

impl FormationLayout {
    /// The nearest half of the agents forms the inner ring.
    pub fn assign(spec: &TaskSpec, state: &WorldState) -> Self {
        let c = state.landmarks[0];
        let mut order: Vec<usize> = (0..state.n_agents()).collect();
        order.sort_by(|&i, &j| dist(state.agents[i].pos, c).total_cmp(&dist(state.agents[j].pos, c)));
        let outer = order.split_off(order.len() / 2);
        Self { rings: [order, outer], radii: [spec.inner_radius, spec.outer_radius] }
    }
}

/// Sorted angular gaps around `center`, wrapping past 2π.
fn angular_gaps(state: &WorldState, members: &[usize], center: [f64; 2]) -> Vec<f64> {
    let mut angles: Vec<f64> = members
        .iter()
        .map(|&i| {
            let p = state.agents[i].pos;
            (p[1] - center[1]).atan2(p[0] - center[0])
        })
        .collect();
    angles.sort_by(f64::total_cmp);
    let k = angles.len();
    (0..k)
        .map(|m| if m + 1 < k { angles[m + 1] - angles[m] } else { angles[0] + TAU - angles[m] })
        .collect()
}

fn variance(xs: &[f64]) -> f64 {
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64
}

/// The two components of the formation reward, each averaged over the
/// two sub-teams.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FormationTerms {
    /// Minus the mean radial error.
    pub distance: f64,
    /// Minus the variance of the angular gaps.
    pub regularity: f64,
}

pub fn formation_terms(spec: &TaskSpec, state: &WorldState) -> FormationTerms {
    let layout = FormationLayout::assign(spec, state);
    let c = state.landmarks[0];
    let mut terms = FormationTerms { distance: 0.0, regularity: 0.0 };
    for (members, &r) in layout.rings.iter().zip(&layout.radii) {
        let err: f64 = members.iter().map(|&i| (dist(state.agents[i].pos, c) - r).abs()).sum();
        terms.distance -= err / members.len() as f64 / 2.0;
        terms.regularity -= variance(&angular_gaps(state, members, c)) / 2.0;
    }
    terms
}

pub fn formation_reward(spec: &TaskSpec, state: &WorldState) -> Vec<f64> {
    let t = formation_terms(spec, state);
    vec![t.distance + t.regularity; state.n_agents()]
}

pub fn formation_success(spec: &TaskSpec, state: &WorldState) -> bool {
    let layout = FormationLayout::assign(spec, state);
    let c = state.landmarks[0];
    layout.rings.iter().zip(&layout.radii).all(|(members, &r)| {
        let ideal = TAU / members.len() as f64;
        members.iter().all(|&i| (dist(state.agents[i].pos, c) - r).abs() <= spec.formation_tolerance)
            && angular_gaps(state, members, c)
                .iter()
                .all(|g| (g - ideal).abs() < spec.formation_gap_tolerance * ideal)
    })
}

/// Task success judged on the final state of an episode; `None` for soccer.
pub fn success(spec: &TaskSpec, final_state: &WorldState) -> Option<bool> {
    match spec.task {
        Task::Coverage => Some(is_covered(spec, final_state)),
        Task::Formation => Some(formation_success(spec, final_state)),
        Task::Soccer => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SoccerEvent {
    None,
    Goal { scorer: usize },
}

/// Center of the goal that `team` attacks.
pub fn opponent_goal(spec: &TaskSpec, team: usize) -> [f64; 2] {
    let a = spec.physics.arena_half;
    if team == RED {
        [a, 0.0]
    } else {
        [-a, 0.0]
    }
}

pub fn soccer_event(spec: &TaskSpec, state: &WorldState) -> SoccerEvent {
    let Some(ball) = &state.ball else { return SoccerEvent::None };
    let line = spec.physics.arena_half - spec.physics.ball_radius;
    if ball.pos[1].abs() > spec.goal_half_width {
        SoccerEvent::None
    } else if ball.pos[0] >= line {
        SoccerEvent::Goal { scorer: RED }
    } else if ball.pos[0] <= -line {
        SoccerEvent::Goal { scorer: BLUE }
    } else {
        SoccerEvent::None
    }
}

/// Terminal component plus progress shaping, shared within each team.
pub fn soccer_terminal(spec: &TaskSpec, event: SoccerEvent, team: usize) -> f64 {
    match event {
        SoccerEvent::None => 0.0,
        SoccerEvent::Goal { scorer } if scorer == team => spec.score_reward,
        SoccerEvent::Goal { .. } => -spec.score_reward,
    }
}

pub fn soccer_shaping(spec: &TaskSpec, prev: &WorldState, next: &WorldState, team: usize) -> f64 {
    let (Some(b0), Some(b1)) = (&prev.ball, &next.ball) else { return 0.0 };
    let goal = opponent_goal(spec, team);
    let progress = dist(b0.pos, goal) - dist(b1.pos, goal);
    let closest = |s: &WorldState, ball: [f64; 2]| {
        (0..s.n_agents())
            .filter(|&i| s.teams[i] == team)
            .map(|i| dist(s.agents[i].pos, ball))
            .fold(f64::INFINITY, f64::min)
    };
    let approach = closest(prev, b0.pos) - closest(next, b1.pos);
    spec.ball_progress_coef * progress + spec.ball_approach_coef * approach
}

pub fn soccer_reward(spec: &TaskSpec, prev: &WorldState, next: &WorldState) -> (Vec<f64>, SoccerEvent) {
    let event = soccer_event(spec, next);
    let per_team = [RED, BLUE].map(|t| soccer_terminal(spec, event, t) + soccer_shaping(spec, prev, next, t));
    (next.teams.iter().map(|&t| per_team[t]).collect(), event)
}
