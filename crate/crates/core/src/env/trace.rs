use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use super::world::{Action, Transition, WorldState};

pub const TRACE_FORMAT_VERSION: u32 = 1;

/// One step of an episode, written as a single JSON line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub format_version: u32,
    pub step: usize,
    pub positions: Vec<[f64; 2]>,
    pub velocities: Vec<[f64; 2]>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ball: Option<[f64; 2]>,
    pub landmarks: Vec<[f64; 2]>,
}

impl TraceRecord {
    /// Record for the state reached by `transition` under `actions`.
    pub fn from_step(actions: &[Action], transition: &Transition) -> Self {
        let s: &WorldState = &transition.state;
        Self {
            format_version: TRACE_FORMAT_VERSION,
            step: s.step_index,
            positions: s.positions(),
            velocities: s.velocities(),
            actions: actions.iter().map(|a| a.index()).collect(),
            rewards: transition.rewards.clone(),
            ball: s.ball.map(|b| b.pos),
            landmarks: s.landmarks.clone(),
        }
    }
}

pub struct TraceWriter<W: Write> {
    out: W,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(out: W) -> Self {
        Self { out }
    }

    pub fn write(&mut self, record: &TraceRecord) -> io::Result<()> {
        serde_json::to_writer(&mut self.out, record)?;
        self.out.write_all(b"\n")
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

pub fn read_trace(input: impl BufRead) -> io::Result<Vec<TraceRecord>> {
    input
        .lines()
        .filter(|l| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .map(|l| serde_json::from_str(&l?).map_err(io::Error::from))
        .collect()
}
