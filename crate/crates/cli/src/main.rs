mod agents;
mod commands;
mod config;
mod manifest;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use agents::AgentSpec;

#[derive(Parser, Debug)]
#[command(name = "reachlab", version, about = "GUI-flow datasets, rewards, training and evaluation on page graphs")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalOpts {
    /// Seed for every random choice in the run.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Flat TOML config; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Graph file (JSON).
    #[arg(long, global = true)]
    pub graph: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a built-in graph to <out>/graph.json.
    GenGraph {
        #[arg(long, value_enum, default_value_t = GraphKind::Random)]
        kind: GraphKind,
        /// Page count for random graphs.
        #[arg(long, default_value_t = 12)]
        pages: usize,
    },
    /// Sample, validate, describe and filter flows into <out>/flows.jsonl.
    BuildDataset {
        #[arg(long)]
        num_flows: Option<usize>,
    },
    /// Split flows into reaching and operation subtasks (<out>/subtasks.jsonl).
    ExtractSubtasks {
        #[arg(long)]
        flows: PathBuf,
        /// Element names already present in prior data, one per line.
        #[arg(long)]
        known_names: Option<PathBuf>,
        /// Fixed template indices, cycled, instead of seeded picks.
        #[arg(long, value_delimiter = ',')]
        template_indices: Option<Vec<usize>>,
    },
    /// Regenerate each golden step with an agent and pair actions by reward (<out>/prefs.jsonl).
    BuildPrefs {
        #[arg(long)]
        flows: PathBuf,
        #[arg(long, default_value = "random")]
        agent: AgentSpec,
    },
    /// Train the linear policy (<out>/checkpoint.json, <out>/loss.csv).
    Train {
        #[arg(long, value_enum)]
        objective: Objective,
        /// Flows for SFT.
        #[arg(long)]
        flows: Option<PathBuf>,
        /// Preference pairs for DPO.
        #[arg(long)]
        prefs: Option<PathBuf>,
        /// Starting checkpoint; for DPO it is also the frozen reference.
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
    },
    /// Run an agent on every gold flow's task and score it (<out>/metrics.json, <out>/traces.jsonl).
    Eval {
        #[arg(long)]
        flows: PathBuf,
        #[arg(long, default_value = "golden")]
        agent: AgentSpec,
        #[arg(long)]
        max_steps: Option<usize>,
    },
    /// Run one episode and print its trace.
    RunEpisode {
        #[arg(long)]
        task: Option<String>,
        #[arg(long)]
        start: Option<String>,
        /// Take task and start page from this flow file (with --flow-index).
        #[arg(long)]
        flows: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        flow_index: usize,
        #[arg(long, default_value = "random")]
        agent: AgentSpec,
        #[arg(long)]
        max_steps: Option<usize>,
    },
    /// Reference bridge agent: answers every request with the first offered action.
    #[command(hide = true)]
    EchoAgent {
        /// Serve TCP connections on this address instead of stdin/stdout.
        #[arg(long)]
        listen: Option<String>,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphKind {
    Random,
    Shopping,
    Cart,
    TwoRoute,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Sft,
    Dpo,
}

/// Failure class, mapped to the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Config,
    Data,
    Agent,
}

impl ExitKind {
    fn code(self) -> u8 {
        match self {
            ExitKind::Config => 1,
            ExitKind::Data => 2,
            ExitKind::Agent => 3,
        }
    }
}

impl fmt::Display for ExitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExitKind::Config => "configuration error",
            ExitKind::Data => "data error",
            ExitKind::Agent => "agent error",
        })
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let kind = err.downcast_ref::<ExitKind>().copied().unwrap_or(ExitKind::Data);
            ExitCode::from(kind.code())
        }
    }
}
