//! `coulomb`: heat kernels, invariant checks, Gibbs sampling, transport and
//! concentration experiments from the command line.
//!
//! Exit codes: 0 success, 1 a scientific check failed, 2 usage or input error.

mod cache;
mod commands;
mod experiment;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use coulomb_core::ManifoldId;

#[derive(Parser)]
#[command(name = "coulomb", version, about = "Coulomb gases on compact manifolds")]
struct Cli {
    /// Worker threads (default: all logical cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate p_t, G and G_t at point pairs.
    KernelTable(KernelTableArgs),
    /// Run an invariant suite.
    Verify(VerifyArgs),
    /// Run one Metropolis chain and write a checkpoint.
    Sample(SampleArgs),
    /// Exact W1 between two measure files.
    Transport(TransportArgs),
    /// Run a concentration experiment from a JSON config.
    Experiment(ExperimentArgs),
    /// Equilibrium density and entropy for a potential.
    Equilibrium(EquilibriumArgs),
}

#[derive(Args)]
struct KernelTableArgs {
    #[arg(long, value_parser = parse_manifold)]
    manifold: ManifoldId,
    /// Comma-separated times.
    #[arg(long, value_delimiter = ',', required = true)]
    t: Vec<f64>,
    /// A pair as `x1,x2;y1,y2` (repeatable).
    #[arg(long = "pair")]
    pairs: Vec<String>,
    /// Number of random pairs when no --pair is given.
    #[arg(long, default_value_t = 3)]
    random_pairs: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output CSV (stdout when absent).
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// spectral, transport, regularize or all.
    #[arg(long, default_value = "all")]
    suite: String,
    /// Restrict to one manifold.
    #[arg(long, value_parser = parse_manifold)]
    manifold: Option<ManifoldId>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long, value_parser = parse_manifold, required_unless_present = "resume")]
    manifold: Option<ManifoldId>,
    #[arg(long, required_unless_present = "resume")]
    n: Option<usize>,
    #[arg(long, required_unless_present = "resume")]
    beta: Option<f64>,
    #[arg(long, default_value_t = 1000)]
    sweeps: usize,
    #[arg(long, default_value_t = 500)]
    burn_in: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Initial proposal scale (tuned during burn-in).
    #[arg(long, default_value_t = 0.25)]
    step: f64,
    /// Potential as JSON, e.g. '{"type":"cosine","amplitude":0.01}'.
    #[arg(long)]
    potential: Option<String>,
    /// Continue the chain stored in this checkpoint.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Checkpoint to write.
    #[arg(long, short)]
    output: PathBuf,
}

#[derive(Args)]
struct TransportArgs {
    /// Measure JSON: {"manifold", "coords", "weights"}.
    #[arg(long)]
    mu: PathBuf,
    #[arg(long)]
    nu: PathBuf,
    /// Manifold for files that do not name one.
    #[arg(long, value_parser = parse_manifold)]
    manifold: Option<ManifoldId>,
    /// Write the optimal plan as CSV triples (source, sink, mass).
    #[arg(long)]
    plan: Option<PathBuf>,
    /// Also report the entropic bracket at this regularization.
    #[arg(long)]
    entropic: Option<f64>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, short)]
    output: PathBuf,
    /// Reuse finished cell checkpoints from an earlier run.
    #[arg(long)]
    resume: bool,
}

#[derive(Args)]
struct EquilibriumArgs {
    #[arg(long, value_parser = parse_manifold)]
    manifold: ManifoldId,
    /// Potential as JSON; uniform equilibrium when absent.
    #[arg(long)]
    potential: Option<String>,
    #[arg(long, default_value_t = 64)]
    resolution: usize,
    /// Nodes at which the first-order condition is checked.
    #[arg(long, default_value_t = 24)]
    residual_samples: usize,
    /// Density CSV (coordinates, density).
    #[arg(long, short)]
    output: Option<PathBuf>,
}

fn parse_manifold(s: &str) -> Result<ManifoldId, String> {
    s.parse::<ManifoldId>().map_err(|e| e.to_string())
}

/// Failure classes mapped onto exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, unreadable or invalid input files.
    Usage(String),
    /// A check failed or a computation broke down.
    Failure(String),
}

impl From<coulomb_core::Error> for CliError {
    fn from(e: coulomb_core::Error) -> Self {
        CliError::Failure(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Failure(format!("i/o: {e}"))
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(j) = cli.jobs {
        if j == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(2);
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .expect("thread pool is configured once");
    }
    let result = match cli.command {
        Command::KernelTable(a) => commands::kernel_table(a),
        Command::Verify(a) => commands::verify(a),
        Command::Sample(a) => commands::sample(a),
        Command::Transport(a) => commands::transport(a),
        Command::Experiment(a) => experiment::run(a),
        Command::Equilibrium(a) => commands::equilibrium(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Failure(msg)) => {
            eprintln!("failed: {msg}");
            ExitCode::from(1)
        }
    }
}
