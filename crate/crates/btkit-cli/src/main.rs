mod commands;
mod sim;

use clap::{Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

const EXIT_CODES: &str = "\
Exit codes:
  0  root Success (run), goal reached (plan), or report written
  1  root Failure (run) or planning stopped without a plan
  2  tick or iteration budget exhausted
  3  usage, parse or analysis error (details on stderr)

The default seed comes from BT_SEED, then from the document's meta section, then 0.";

#[derive(Parser)]
#[command(name = "bt", version, about = "Behavior tree toolkit", after_help = EXIT_CODES)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    /// Exact Markov analysis of profiled leaves.
    Reliability,
    /// Step functions for leaves with fixed durations.
    Deterministic,
    /// Seeded simulation of profiled leaves.
    Montecarlo,
    /// Sampled verification of a built-in state-space model.
    Statespace,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Source {
    Subsumption,
    Teleoreactive,
    Decision,
    Fsm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Emit {
    Json,
    Bt,
    Dot,
}

#[derive(Subcommand)]
enum Cmd {
    /// Tick the tree with scripted and profiled leaves; prints one JSON line per tick.
    Run {
        /// Document path, or `-` for standard input.
        file: PathBuf,
        /// Tick budget.
        #[arg(long, default_value_t = 1000)]
        ticks: u64,
        #[arg(long, env = "BT_SEED")]
        seed: Option<u64>,
    },
    /// Analyze the document and print a JSON report.
    ///
    /// The mode may be given before or after the file; without it, documents with a
    /// statespace section get `statespace` and all others `reliability`.
    Analyze {
        #[arg(num_args = 1..=2, value_names = ["FILE", "MODE"])]
        args: Vec<String>,
        /// Output points for reliability curves, or points per axis for state-space grids.
        #[arg(long)]
        grid: Option<usize>,
        /// Last output time for reliability curves, or simulated steps for state-space checks.
        #[arg(long)]
        horizon: Option<f64>,
        /// Monte Carlo runs.
        #[arg(long, default_value_t = 10_000)]
        runs: usize,
        #[arg(long, env = "BT_SEED")]
        seed: Option<u64>,
    },
    /// Plan and act on the document's planner section.
    Plan {
        file: PathBuf,
        /// Expansion rounds.
        #[arg(long, default_value_t = 100)]
        max_iter: usize,
        #[arg(long, default_value_t = 10_000)]
        max_ticks: u64,
    },
    /// Convert another control architecture to a behavior tree.
    Convert {
        file: PathBuf,
        #[arg(long, value_enum)]
        from: Source,
        #[arg(long, value_enum, default_value_t = Emit::Json)]
        emit: Emit,
    },
    /// Render the document's tree as Graphviz DOT.
    ExportDot { file: PathBuf },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.cmd {
        Cmd::Run { file, ticks, seed } => commands::run(&file, ticks, seed),
        Cmd::Analyze { args, grid, horizon, runs, seed } => {
            commands::analyze(&args, commands::AnalyzeFlags { grid, horizon, runs, seed })
        }
        Cmd::Plan { file, max_iter, max_ticks } => commands::plan(&file, max_iter, max_ticks),
        Cmd::Convert { file, from, emit } => commands::convert(&file, from, emit),
        Cmd::ExportDot { file } => commands::export_dot(&file),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
