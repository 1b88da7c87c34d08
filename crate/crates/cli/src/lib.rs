//! Command-line driver: loads a run configuration, runs one study and
//! writes its artifacts (CSV series, JSON summaries, SVG plots) into the
//! output directory together with the resolved configuration.
//!
//! Exit codes: 0 on success, 1 for configuration and usage errors, 2 for
//! numerical failures.

pub mod commands;
pub mod config;
pub mod svg;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub use config::{RunConfig, RunParams};
pub use svg::{emit_svg, Series};

use levyfilter::sde::FastMode;

/// Environment variable that takes precedence over `--threads`.
pub const THREADS_ENV: &str = "LEVYFILTER_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("{0}")]
    Usage(String),

    #[error("numerical failure (seed {seed}): {source}")]
    Numerical {
        seed: u64,
        #[source]
        source: levyfilter::Error,
    },

    #[error(transparent)]
    Core(#[from] levyfilter::Error),

    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numerical { .. } => 2,
            CliError::Core(e) if e.is_numerical() => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "levyfilter", version, about = "Slow-fast jump-diffusion simulation, homogenization and particle filtering")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand. Flags override the config file.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Built-in model: example6 or linear.
    #[arg(long)]
    pub preset: Option<String>,
    /// JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory; created if missing.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (0 = all cores); LEVYFILTER_THREADS takes precedence.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Comma-separated epsilon values.
    #[arg(long, value_delimiter = ',')]
    pub eps: Option<Vec<f64>>,
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    /// euler or exact_ou.
    #[arg(long, value_parser = parse_fast_mode)]
    pub fast_mode: Option<FastMode>,
}

#[derive(Debug, Clone, Args)]
pub struct FilterArgs {
    #[arg(long)]
    pub particles: Option<usize>,
    /// Test functions, e.g. `tanh,indicator(-1,1)`.
    #[arg(long)]
    pub psi: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one (X, Z, Y) path.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Estimate the invariant measure of the frozen fast process and the
    /// averaged coefficients at one slow state.
    Average {
        #[command(flatten)]
        common: Common,
        /// Frozen slow state, comma-separated.
        #[arg(long, value_delimiter = ',')]
        x: Option<Vec<f64>>,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Run a particle filter on a simulated observation path.
    Filter {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        filter: FilterArgs,
        /// Use the homogenized signal dynamics.
        #[arg(long)]
        homogenized: bool,
    },
    /// Filter convergence study across epsilon.
    Converge {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        filter: FilterArgs,
        #[arg(long)]
        replications: Option<usize>,
        #[arg(long)]
        martingale_runs: Option<usize>,
        /// Also write an SVG of the mean gap against epsilon.
        #[arg(long)]
        plot: bool,
    },
    /// Check the model's standing assumptions on random samples.
    Validate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        samples: Option<usize>,
    },
}

fn parse_fast_mode(s: &str) -> Result<FastMode, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| format!("unknown fast mode `{s}` (expected euler or exact_ou)"))
}

impl Command {
    pub fn common(&self) -> &Common {
        match self {
            Command::Simulate { common }
            | Command::Average { common, .. }
            | Command::Filter { common, .. }
            | Command::Converge { common, .. }
            | Command::Validate { common, .. } => common,
        }
    }
}

/// Worker count: the environment variable wins over the flag.
fn thread_count(flag: Option<usize>) -> Result<usize, CliError> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::config(THREADS_ENV, format!("expected a non-negative integer, got `{v}`"))),
        Err(_) => Ok(flag.unwrap_or(0)),
    }
}

/// Runs the command line `argv` (including the program name) and returns
/// the process exit code. Messages go to stdout/stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: &Command) -> Result<(), CliError> {
    let threads = thread_count(command.common().threads)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))?;
    let config = commands::resolve_config(command)?;
    let seed = config.run.seed;
    pool.install(|| commands::dispatch(command, &config)).map_err(|e| match e {
        CliError::Core(c) if c.is_numerical() => CliError::Numerical { seed, source: c },
        other => other,
    })
}
