mod config;
mod log;
mod run;
mod selftest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tnkit::TnError;

use crate::config::RunArgs;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    NotConverged(String),
    Io(String),
    Internal(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::NotConverged(_) => 2,
            CliError::Io(_) => 3,
            CliError::Internal(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::NotConverged(m) => write!(f, "not converged: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Internal(m) => write!(f, "{m}"),
        }
    }
}

impl From<TnError> for CliError {
    fn from(e: TnError) -> Self {
        match e {
            TnError::Config(_) | TnError::CapExceeded { .. } => CliError::Config(e.to_string()),
            TnError::Io(_) | TnError::Format(_) => CliError::Io(e.to_string()),
            other => CliError::Internal(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

/// Variational ground states of spin and boson chains on binary tree tensor
/// networks.
#[derive(Debug, Parser)]
#[command(name = "tnkit", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
    /// Only print the final summary.
    #[arg(long, short, global = true, env = "TNKIT_QUIET")]
    quiet: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Ground state search.
    Gs(RunArgs),
    /// Ground state followed by the lowest excited states of the same sector.
    Excited {
        #[command(flatten)]
        run: RunArgs,
        /// Number of states above the ground state.
        #[arg(long, env = "TNKIT_LEVELS", default_value_t = 1)]
        levels: usize,
        /// Overlap penalty; defaults to ten times the largest energy scale.
        #[arg(long, env = "TNKIT_PENALTY")]
        penalty: Option<f64>,
    },
    /// Sum checkpointed states and compress the result to a bond dimension.
    Compress(CompressArgs),
    /// Quick numerical checks of the library against exact references.
    Selftest,
    /// Sweep timings over a list of bond dimensions.
    Bench {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',', default_value = "8,16,32")]
        bond_dims: Vec<usize>,
        /// Sweeps per bond dimension; the first one is not timed when there are more.
        #[arg(long, default_value_t = 2)]
        sweeps: usize,
    },
}

#[derive(Debug, clap::Args)]
pub struct CompressArgs {
    /// Checkpoint of one summand; repeat for sums.
    #[arg(long = "input", required = true)]
    pub inputs: Vec<PathBuf>,
    /// One real weight per input, comma separated (default all 1).
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub weights: Vec<f64>,
    #[arg(long, env = "TNKIT_BOND_DIM")]
    pub bond_dim: usize,
    #[arg(long, env = "TNKIT_MAX_SWEEPS", default_value_t = 20)]
    pub max_sweeps: usize,
    /// Where the compressed state goes.
    #[arg(long, env = "TNKIT_CHECKPOINT")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, env = "TNKIT_LOG")]
    pub log: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let quiet = cli.quiet;
    let result = match cli.cmd {
        Command::Gs(args) => args.resolve().and_then(|c| run::ground(&c, quiet)),
        Command::Excited { run, levels, penalty } => run.resolve().and_then(|c| run::excited(&c, levels, penalty, quiet)),
        Command::Compress(args) => run::compress(&args, quiet),
        Command::Selftest => selftest::run(quiet),
        Command::Bench { run, bond_dims, sweeps } => {
            run.resolve().and_then(|c| run::bench(&c, &bond_dims, sweeps, quiet))
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tnkit: {e}");
            ExitCode::from(e.code())
        }
    }
}
