use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::EnvError;
use crate::model::AgentGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// Cover every landmark with some agent.
    Coverage,
    /// Two concentric regular polygons around one landmark.
    Formation,
    /// Two teams push a ball into the opposing goal. The two goals are
    /// landmarks.
    Soccer,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Coverage => "coverage",
            Task::Formation => "formation",
            Task::Soccer => "soccer",
        })
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "coverage" => Ok(Task::Coverage),
            "formation" => Ok(Task::Formation),
            "soccer" => Ok(Task::Soccer),
            other => Err(format!("unknown task `{other}` (expected coverage, formation or soccer)")),
        }
    }
}

pub const RED: usize = 0;
pub const BLUE: usize = 1;

/// Double-integrator constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicsConfig {
    pub dt: f64,
    pub damping: f64,
    pub agent_mass: f64,
    pub ball_mass: f64,
    pub accel_unit: f64,
    pub sensitivity: f64,
    pub agent_max_speed: f64,
    pub ball_max_speed: f64,
    pub arena_half: f64,
    pub agent_radius: f64,
    pub ball_radius: f64,
    /// Repulsion force per unit of overlap between two bodies.
    pub contact_stiffness: f64,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        Self {
            dt: 0.1,
            damping: 0.25,
            agent_mass: 1.0,
            ball_mass: 1.0,
            accel_unit: 1.0,
            sensitivity: 5.0,
            agent_max_speed: 1.3,
            ball_max_speed: 1.0,
            arena_half: 1.0,
            agent_radius: 0.05,
            ball_radius: 0.15,
            contact_stiffness: 100.0,
        }
    }
}

/// Everything that defines one task instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task: Task,
    pub n_agents: usize,
    pub n_landmarks: usize,
    pub max_episode_steps: usize,
    pub physics: PhysicsConfig,
    /// Formation ring radii.
    pub inner_radius: f64,
    pub outer_radius: f64,
    /// Half the height of each goal mouth.
    pub goal_half_width: f64,
    /// A landmark counts as covered when an agent is within this distance.
    pub coverage_tolerance: f64,
    /// Allowed radial error per agent for formation success.
    pub formation_tolerance: f64,
    /// Allowed angular-gap deviation, as a fraction of the ideal gap.
    pub formation_gap_tolerance: f64,
    pub time_penalty: f64,
    pub score_reward: f64,
    pub ball_progress_coef: f64,
    pub ball_approach_coef: f64,
}

impl TaskSpec {
    fn base(task: Task, n_agents: usize, n_landmarks: usize, max_episode_steps: usize) -> Self {
        Self {
            task,
            n_agents,
            n_landmarks,
            max_episode_steps,
            physics: PhysicsConfig::default(),
            inner_radius: 0.3,
            outer_radius: 0.6,
            goal_half_width: 0.3,
            coverage_tolerance: 0.1,
            formation_tolerance: 0.1,
            formation_gap_tolerance: 0.2,
            time_penalty: 0.05,
            score_reward: 10.0,
            ball_progress_coef: 0.1,
            ball_approach_coef: 0.01,
        }
    }

    pub fn coverage(n_agents: usize, n_landmarks: usize) -> Self {
        Self::base(Task::Coverage, n_agents, n_landmarks, 50)
    }

    pub fn formation(n_agents: usize) -> Self {
        Self::base(Task::Formation, n_agents, 1, 50)
    }

    pub fn soccer(n_agents: usize) -> Self {
        Self::base(Task::Soccer, n_agents, 2, 100)
    }

    /// Default spec for `task` with `n_agents` agents.
    pub fn for_task(task: Task, n_agents: usize) -> Self {
        match task {
            Task::Coverage => Self::coverage(n_agents, n_agents),
            Task::Formation => Self::formation(n_agents),
            Task::Soccer => Self::soccer(n_agents),
        }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let invalid = |msg: String| Err(EnvError::InvalidSpec(msg));
        if self.n_agents == 0 {
            return invalid("at least one agent is required".into());
        }
        if self.max_episode_steps == 0 {
            return invalid("max_episode_steps must be positive".into());
        }
        match self.task {
            Task::Coverage if self.n_landmarks == 0 => invalid("coverage needs at least one landmark".into()),
            Task::Formation if self.n_agents % 2 != 0 => {
                invalid(format!("formation needs an even agent count, got {}", self.n_agents))
            }
            Task::Formation if self.n_landmarks != 1 => invalid("formation uses exactly one landmark".into()),
            Task::Soccer if self.n_agents % 2 != 0 => {
                invalid(format!("soccer needs two equal teams, got {} agents", self.n_agents))
            }
            Task::Soccer if self.n_landmarks != 2 => invalid("soccer uses exactly two goal landmarks".into()),
            _ => {
                let p = &self.physics;
                if p.dt <= 0.0 || p.agent_mass <= 0.0 || p.ball_mass <= 0.0 || p.arena_half <= 0.0 {
                    return invalid("physics constants must be positive".into());
                }
                if !(0.0..1.0).contains(&p.damping) {
                    return invalid("damping must lie in [0, 1)".into());
                }
                Ok(())
            }
        }
    }

    /// Team of each agent: first half red, second half blue in soccer; one
    /// team otherwise.
    pub fn teams(&self) -> Vec<usize> {
        match self.task {
            Task::Soccer => (0..self.n_agents).map(|i| if i < self.n_agents / 2 { RED } else { BLUE }).collect(),
            _ => vec![RED; self.n_agents],
        }
    }

    pub fn is_competitive(&self) -> bool {
        self.task == Task::Soccer
    }

    /// Entities in each observation.
    pub fn n_entities(&self) -> usize {
        match self.task {
            Task::Soccer => self.n_landmarks + 1,
            _ => self.n_landmarks,
        }
    }

    /// Communication graph: fully observable, two relations in soccer.
    pub fn graph(&self) -> AgentGraph {
        if self.is_competitive() {
            AgentGraph::with_teams(self.teams())
        } else {
            AgentGraph::fully_connected(self.n_agents)
        }
    }
}
