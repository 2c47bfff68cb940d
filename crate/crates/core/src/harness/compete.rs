use std::path::Path;

use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use super::HarnessError;
use crate::env::{Task, TaskSpec, BLUE, RED};
use crate::ppo::{episode_seeds, run_episodes, Controller, Matchup, PolicyController};

/// Outcome counts of one red-versus-blue pairing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompetitionCell {
    pub red: String,
    pub blue: String,
    pub episodes: usize,
    pub red_wins: usize,
    pub blue_wins: usize,
    pub draws: usize,
}

impl CompetitionCell {
    /// `(w, l, d)` from red's point of view.
    pub fn wld(&self) -> (usize, usize, usize) {
        (self.red_wins, self.blue_wins, self.draws)
    }
}

pub const COMPETITION_VERSION: u32 = 1;
pub const COMPETITION_FILE: &str = "competition.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompetitionReport {
    pub format_version: u32,
    pub cells: Vec<CompetitionCell>,
}

impl CompetitionReport {
    pub fn new(cells: Vec<CompetitionCell>) -> Self {
        Self { format_version: COMPETITION_VERSION, cells }
    }

    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        std::fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| HarnessError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let report: Self = serde_json::from_str(&text)?;
        if report.format_version != COMPETITION_VERSION {
            return Err(HarnessError::Version {
                found: Some(report.format_version.into()),
                supported: COMPETITION_VERSION,
            });
        }
        Ok(report)
    }
}

/// Plays `episodes` seeded soccer episodes. An episode is won by the team
/// that scores; it is a draw when nobody scores before the step limit.
pub fn compete(
    spec: &TaskSpec,
    red: (&str, &mut dyn Controller),
    blue: (&str, &mut dyn Controller),
    episodes: usize,
    seed: u64,
) -> Result<CompetitionCell, HarnessError> {
    if spec.task != Task::Soccer {
        return Err(HarnessError::TaskMismatch(format!("competition needs soccer, got {}", spec.task)));
    }
    let mut matchup = Matchup { red: red.1, blue: blue.1 };
    let results = run_episodes(spec, &mut matchup, &episode_seeds(seed, episodes), 32, None)?;
    let count = |team| results.iter().filter(|e| e.scored == Some(team)).count();
    let (red_wins, blue_wins) = (count(RED), count(BLUE));
    Ok(CompetitionCell {
        red: red.0.to_string(),
        blue: blue.0.to_string(),
        episodes,
        red_wins,
        blue_wins,
        draws: episodes - red_wins - blue_wins,
    })
}

/// Red plays the first checkpoint's greedy policy, blue the second's.
pub fn run_compete(
    red: &Checkpoint,
    blue: &Checkpoint,
    episodes: usize,
    seed: u64,
) -> Result<CompetitionCell, HarnessError> {
    let (rc, bc) = (&red.config, &blue.config);
    if rc.task != Task::Soccer || bc.task != Task::Soccer {
        return Err(HarnessError::TaskMismatch(format!("checkpoints trained on {} and {}, expected soccer", rc.task, bc.task)));
    }
    if rc.n_agents != bc.n_agents {
        return Err(HarnessError::TaskMismatch(format!("team sizes differ: {} vs {} agents", rc.n_agents, bc.n_agents)));
    }
    let spec = rc.task_spec();
    let (red_net, blue_net) = (red.network()?, blue.network()?);
    let mut r = PolicyController::greedy(&red_net, &spec);
    let mut b = PolicyController::greedy(&blue_net, &spec);
    let label = |c: &Checkpoint| format!("{}@{}", c.config.model.activation, c.config.seed);
    compete(&spec, (&label(red), &mut r), (&label(blue), &mut b), episodes, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ppo::{NoopController, ScriptedStriker};

    #[test]
    fn scripted_fixtures() {
        let spec = TaskSpec::soccer(4);
        let cell = compete(&spec, ("striker", &mut ScriptedStriker), ("noop", &mut NoopController), 20, 3).unwrap();
        assert_eq!(cell.wld(), (20, 0, 0));
        let cell = compete(&spec, ("noop", &mut NoopController), ("noop", &mut NoopController), 20, 3).unwrap();
        assert_eq!(cell.wld(), (0, 0, 20));
        let cell = compete(&spec, ("noop", &mut NoopController), ("striker", &mut ScriptedStriker), 20, 3).unwrap();
        assert_eq!(cell.wld(), (0, 20, 0));
    }

    #[test]
    fn cooperative_task_is_rejected() {
        let spec = TaskSpec::coverage(2, 2);
        assert!(matches!(
            compete(&spec, ("a", &mut NoopController), ("b", &mut NoopController), 1, 0),
            Err(HarnessError::TaskMismatch(_))
        ));
    }
}
