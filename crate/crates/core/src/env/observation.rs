use serde::{Deserialize, Serialize};

/// What one agent sees: its own state in its team frame and the relative
/// positions of the entities (landmarks, ball).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// Own position and velocity: `[px, py, vx, vy]`.
    pub agent: [f64; 4],
    /// Entity positions relative to the agent.
    pub entities: Vec<[f64; 2]>,
}

impl Observation {
    pub const AGENT_DIM: usize = 4;
    pub const ENTITY_DIM: usize = 2;
}
