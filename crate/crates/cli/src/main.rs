//! `clockctbn`: simulation, likelihood, inference and experiments for
//! clock-augmented continuous-time Bayesian networks.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use clockctbn::Family;

#[derive(Parser)]
#[command(name = "clockctbn", version, about = "Clock-augmented CTBN toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate trajectories of a model.
    Sample(SampleArgs),
    /// Log likelihood of trajectories under a model.
    Loglik(ModelTrajArgs),
    /// Dump sufficient statistics under the model's graph.
    Stats(StatsArgs),
    /// Per-key parameter posteriors for a fixed structure.
    FitParams(FitParamsArgs),
    /// Parent-set posteriors and edge marginals.
    FitStructure(FitStructureArgs),
    /// AUROC and AUPR of an edge-score matrix.
    Score(ScoreArgs),
    /// Convert a GeneNetWeaver-style TSV into trajectories.
    IngestGnw(IngestArgs),
    /// Run a synthetic study.
    Experiment(ExperimentArgs),
    /// Check that input files are well formed.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    model: PathBuf,
    /// Observation length of each trajectory.
    #[arg(long)]
    end_time: f64,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    count: usize,
    /// Comma-separated initial states (all zero by default).
    #[arg(long, value_delimiter = ',')]
    init: Option<Vec<usize>>,
    /// Output JSONL (standard output when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ModelTrajArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    traj: PathBuf,
}

#[derive(Args)]
struct StatsArgs {
    /// Model or structure file; only nodes and edges are used.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    traj: PathBuf,
    /// Merge windows into regimes of unchanged parents.
    #[arg(long)]
    regime: bool,
}

#[derive(Args)]
struct FitParamsArgs {
    /// Structure file: nodes and edges.
    #[arg(long)]
    model_structure: PathBuf,
    #[arg(long)]
    traj: PathBuf,
    /// Survival family; defaults to the file's family, else weibull.
    #[arg(long)]
    family: Option<Family>,
    /// Also report a normalized posterior on a log-spaced grid.
    #[arg(long)]
    grid: bool,
    /// Grid points per parameter.
    #[arg(long, default_value_t = 25)]
    grid_points: usize,
    #[arg(long, default_value_t = 0.1)]
    lower: f64,
    #[arg(long, default_value_t = 100.0)]
    upper: f64,
}

#[derive(Args)]
struct FitStructureArgs {
    /// A trajectory JSONL file or a directory of them.
    #[arg(long)]
    trajs: PathBuf,
    #[arg(long, default_value = "weibull")]
    family: Family,
    #[arg(long, default_value_t = 3)]
    max_indegree: usize,
    /// Per-edge log penalty of the graph prior (uniform prior when absent).
    #[arg(long)]
    edge_penalty: Option<f64>,
    /// Comma-separated node cardinalities (inferred when absent).
    #[arg(long, value_delimiter = ',')]
    cardinalities: Option<Vec<usize>>,
    /// Score with the exponential Gamma-conjugate baseline instead.
    #[arg(long)]
    baseline: bool,
    /// Integrate each trajectory separately and sum the evidence.
    #[arg(long)]
    per_trajectory: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ScoreArgs {
    /// Edge-score matrix, or an object with an "edge_marginals" matrix.
    #[arg(long)]
    scores: PathBuf,
    /// 0/1 adjacency matrix, or a model file.
    #[arg(long)]
    truth: PathBuf,
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    #[arg(long, default_value_t = 8)]
    min_transitions: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Study {
    Mse,
    Structure,
    ShapeSweep,
}

#[derive(Args)]
struct ExperimentArgs {
    study: Study,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Worker threads (all cores when absent).
    #[arg(long)]
    threads: Option<usize>,
    /// Use the original study's counts.
    #[arg(long)]
    paper_scale: bool,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    traj: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    tsv: Option<PathBuf>,
    /// Edge-score or adjacency matrix JSON.
    #[arg(long)]
    matrix: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CLOCKCTBN_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(commands::CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(commands::CliError::Data(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
