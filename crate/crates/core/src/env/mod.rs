//! Two-dimensional particle world with double-integrator agents and the
//! coverage, formation and soccer tasks.

mod observation;
mod reward;
mod spec;
mod trace;
mod world;

pub use observation::Observation;
pub use reward::{
    coverage_reward, formation_reward, formation_success, formation_terms, is_covered, opponent_goal, soccer_event,
    soccer_reward, soccer_shaping, soccer_terminal, success, FormationLayout, FormationTerms, SoccerEvent,
};
pub use spec::{PhysicsConfig, Task, TaskSpec, BLUE, RED};
pub use trace::{read_trace, TraceRecord, TraceWriter, TRACE_FORMAT_VERSION};
pub use world::{observe, observe_all, reset, step, Action, Body, StepInfo, Transition, WorldState};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EnvError {
    #[error("invalid task spec: {0}")]
    InvalidSpec(String),
    #[error("expected {expected} actions, got {found}")]
    ActionCount { expected: usize, found: usize },
    #[error("step called on a finished episode")]
    EpisodeDone,
}
