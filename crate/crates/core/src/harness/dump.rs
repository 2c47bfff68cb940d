use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use super::HarnessError;
use crate::env::{reset, step, Action, FormationLayout, Task, TaskSpec, TraceRecord, TraceWriter, Transition, WorldState};
use crate::model::{AttentionMatrix, Network, Relation};
use crate::ppo::{policy_step, AttentionSummary};

pub const DUMP_VERSION: u32 = 1;
pub const ADJACENCY_FILE: &str = "adjacency.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";
pub const TRACE_FILE: &str = "trace.jsonl";

/// One attention matrix of one step, as written to `adjacency.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjacencyRecord {
    pub format_version: u32,
    pub step: usize,
    pub hop: usize,
    pub head: usize,
    pub relation: Relation,
    pub n: usize,
    /// Row `i` holds agent `i`'s weights over the other agents.
    pub matrix: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpSummary {
    pub format_version: u32,
    pub task: Task,
    pub activation: String,
    pub steps: usize,
    pub matrices: usize,
    pub mean_support: Option<f64>,
    pub max_support: Option<usize>,
    /// Share of all attention weight placed on agents of the other team
    /// (soccer) or the other ring (formation).
    pub inter_team_mass: Option<f64>,
}

/// Paths of the files written by [`dump_graph`].
#[derive(Debug, Clone)]
pub struct DumpFiles {
    pub adjacency: PathBuf,
    pub summary: PathBuf,
    pub trace: PathBuf,
}

fn groups(spec: &TaskSpec, state: &WorldState) -> Option<Vec<usize>> {
    match spec.task {
        Task::Soccer => Some(state.teams.clone()),
        Task::Formation => {
            let layout = FormationLayout::assign(spec, state);
            let mut g = vec![0; state.n_agents()];
            for &i in &layout.rings[1] {
                g[i] = 1;
            }
            Some(g)
        }
        Task::Coverage => None,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, HarnessError> {
    File::create(path).map(BufWriter::new).map_err(|e| HarnessError::io(path, e))
}

/// Rolls the greedy policy of `network` forward for `steps` steps from
/// `seed`, starting new episodes as needed, and writes every attention
/// matrix, an episode trace and a summary into `out_dir`.
pub fn dump_network(
    network: &Network,
    spec: &TaskSpec,
    seed: u64,
    steps: usize,
    out_dir: &Path,
) -> Result<(DumpSummary, DumpFiles), HarnessError> {
    std::fs::create_dir_all(out_dir).map_err(|e| HarnessError::io(out_dir, e))?;
    let files = DumpFiles {
        adjacency: out_dir.join(ADJACENCY_FILE),
        summary: out_dir.join(SUMMARY_FILE),
        trace: out_dir.join(TRACE_FILE),
    };
    let mut adjacency = create(&files.adjacency)?;
    let mut trace = TraceWriter::new(create(&files.trace)?);
    let graph = spec.graph();
    let mut summary = AttentionSummary::default();
    let (mut cross, mut total) = (0.0, 0.0);
    let mut matrices = 0;
    let mut episode = 0u64;
    let mut state = reset(spec, seed)?;

    for t in 0..steps {
        if state.done {
            episode += 1;
            state = reset(spec, seed.wrapping_add(episode))?;
        }
        let decision = policy_step(network, spec, &graph, &[&state], None)?;
        let attention: &[AttentionMatrix] = &decision.attention[0];
        summary.record(&graph, attention);
        let teams = groups(spec, &state);
        for m in attention {
            let w = &m.weights;
            let rows: Vec<Vec<f64>> = (0..w.rows()).map(|i| w.row(i).to_vec()).collect();
            if let Some(teams) = &teams {
                for (i, row) in rows.iter().enumerate() {
                    for (j, &x) in row.iter().enumerate() {
                        total += x;
                        if teams[i] != teams[j] {
                            cross += x;
                        }
                    }
                }
            }
            let record = AdjacencyRecord {
                format_version: DUMP_VERSION,
                step: t,
                hop: m.hop,
                head: m.head,
                relation: m.relation,
                n: w.rows(),
                matrix: rows,
            };
            serde_json::to_writer(&mut adjacency, &record)?;
            adjacency.write_all(b"\n").map_err(|e| HarnessError::io(&files.adjacency, e))?;
            matrices += 1;
        }
        let actions: Vec<Action> = decision.actions[0].iter().map(|&a| Action::ALL[a]).collect();
        let transition: Transition = step(spec, &state, &actions)?;
        trace.write(&TraceRecord::from_step(&actions, &transition)).map_err(|e| HarnessError::io(&files.trace, e))?;
        state = transition.state;
    }
    adjacency.flush().map_err(|e| HarnessError::io(&files.adjacency, e))?;
    trace.into_inner().flush().map_err(|e| HarnessError::io(&files.trace, e))?;

    let result = DumpSummary {
        format_version: DUMP_VERSION,
        task: spec.task,
        activation: network.spec().activation.to_string(),
        steps,
        matrices,
        mean_support: summary.mean_support(),
        max_support: summary.max_support(),
        inter_team_mass: (spec.task != Task::Coverage && total > 0.0).then(|| cross / total),
    };
    std::fs::write(&files.summary, serde_json::to_string_pretty(&result)?)
        .map_err(|e| HarnessError::io(&files.summary, e))?;
    Ok((result, files))
}

/// [`dump_network`] for a checkpoint, using its own task.
pub fn dump_graph(
    checkpoint: &Checkpoint,
    seed: u64,
    steps: usize,
    out_dir: &Path,
) -> Result<(DumpSummary, DumpFiles), HarnessError> {
    let network = checkpoint.network()?;
    dump_network(&network, &checkpoint.config.task_spec(), seed, steps, out_dir)
}

pub fn read_adjacency(path: &Path) -> Result<Vec<AdjacencyRecord>, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(HarnessError::from))
        .collect()
}
