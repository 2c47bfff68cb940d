use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sparsecomm::env::Task;
use sparsecomm::harness::{
    dump_graph, run_compete, run_eval, run_train, Checkpoint, CompetitionReport, HarnessError, RunConfig,
    COMPETITION_FILE,
};
use sparsecomm::model::ActivationMode;

#[derive(Parser)]
#[command(name = "sparsecomm", version, about = "Train and analyse sparse-attention multiagent policies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy with PPO, writing metrics and checkpoints.
    Train {
        #[command(flatten)]
        common: Common,
        /// Resume from this checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Evaluate a checkpoint's greedy policy against the uniform baseline.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Play soccer checkpoints against each other.
    Compete {
        #[command(flatten)]
        common: Common,
        /// Red-team checkpoint; repeat to add more.
        #[arg(long, required = true)]
        red: Vec<PathBuf>,
        /// Blue-team checkpoint; repeat to add more.
        #[arg(long, required = true)]
        blue: Vec<PathBuf>,
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Roll a checkpoint forward and dump its attention matrices.
    DumpGraph {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
    },
}

#[derive(Args)]
struct Common {
    /// Config file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    task: Option<Task>,
    /// softmax, sparsemax or adaptive.
    #[arg(long)]
    activation: Option<ActivationMode>,
    /// Extra `key=value` setting; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Common {
    /// The config file (or `base`) with command-line overrides applied.
    fn resolve(&self, base: Option<&RunConfig>) -> Result<RunConfig, HarnessError> {
        let mut config = match (&self.config, base) {
            (Some(path), _) => RunConfig::load(path)?,
            (None, Some(base)) => base.clone(),
            (None, None) => RunConfig::default(),
        };
        for item in &self.set {
            let (key, value) = item.split_once('=').ok_or_else(|| cli_error(format!("expected KEY=VALUE, got `{item}`")))?;
            config.set(key.trim(), value.trim()).map_err(cli_error)?;
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(out) = &self.out {
            config.out_dir = out.clone();
        }
        if let Some(task) = self.task {
            config.task = task;
        }
        if let Some(activation) = self.activation {
            config.model.activation = activation;
        }
        config.validate()?;
        Ok(config)
    }
}

fn cli_error(message: impl Into<String>) -> HarnessError {
    HarnessError::Config { line: None, message: message.into() }
}

fn load(path: &Path) -> Result<Checkpoint, HarnessError> {
    Checkpoint::load(path)
}

fn run(command: Command) -> Result<(), HarnessError> {
    match command {
        Command::Train { common, checkpoint } => {
            let config = common.resolve(None)?;
            let resume = checkpoint.as_deref().map(load).transpose()?;
            let summary = run_train(&config, resume.as_ref())?;
            println!("steps {} episodes {}", summary.steps, summary.episodes);
            if let Some(row) = summary.evaluations.last() {
                let success = row.success_rate.map_or("n/a".to_string(), |s| format!("{s:.3}"));
                println!("last evaluation: reward/step {:.4} success {success}", row.mean_reward_per_step);
            }
            println!("metrics {}", summary.metrics.display());
            println!("checkpoint {}", summary.final_checkpoint.display());
        }
        Command::Eval { common, checkpoint, episodes } => {
            let ckpt = load(&checkpoint)?;
            let mut config = common.resolve(Some(&ckpt.config))?;
            if let Some(e) = episodes {
                config.train.eval_episodes = e;
            }
            let report = run_eval(&config, &ckpt)?;
            for (label, m) in [("policy", &report.policy), ("uniform", &report.uniform)] {
                let success = m.success_rate.map_or("n/a".to_string(), |s| format!("{s:.3}"));
                println!(
                    "{label:<8} reward/step {:.4} (se {:.4}) success {success}",
                    m.mean_reward_per_step,
                    m.standard_error()
                );
            }
            println!("margin {:.1} noise SD over {} episodes", report.reward_margin(), report.episodes);
        }
        Command::Compete { common, red, blue, episodes } => {
            let config = common.resolve(None)?;
            let episodes = episodes.unwrap_or(config.compete_episodes);
            let reds = red.iter().map(|p| load(p)).collect::<Result<Vec<_>, _>>()?;
            let blues = blue.iter().map(|p| load(p)).collect::<Result<Vec<_>, _>>()?;
            std::fs::create_dir_all(&config.out_dir).map_err(|e| HarnessError::io(&config.out_dir, e))?;
            let mut cells = Vec::new();
            for r in &reds {
                for b in &blues {
                    let cell = run_compete(r, b, episodes, config.seed)?;
                    println!("{} vs {}: {}/{}/{}", cell.red, cell.blue, cell.red_wins, cell.blue_wins, cell.draws);
                    cells.push(cell);
                }
            }
            let path = config.out_dir.join(COMPETITION_FILE);
            CompetitionReport::new(cells).save(&path)?;
            println!("report {}", path.display());
        }
        Command::DumpGraph { common, checkpoint, steps } => {
            let ckpt = load(&checkpoint)?;
            let config = common.resolve(Some(&ckpt.config))?;
            let steps = steps.unwrap_or(config.dump_steps);
            let (summary, files) = dump_graph(&ckpt, config.seed, steps, &config.out_dir)?;
            println!("{} matrices over {} steps", summary.matrices, summary.steps);
            if let Some(s) = summary.mean_support {
                println!("mean support {s:.3}");
            }
            if let Some(m) = summary.inter_team_mass {
                println!("inter-team mass {m:.3}");
            }
            println!("adjacency {}", files.adjacency.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
