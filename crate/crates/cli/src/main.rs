//! `ymlab`: command-line driver for the lattice Yang-Mills laboratory.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |---|---|
//! | 0 | success; for `flow`, outcome `converged` |
//! | 1 | flow error (outcome `error` or a failed flow step) |
//! | 2 | flow outcome `energy_drop` |
//! | 3 | flow outcome `timeout` |
//! | 5 | `gauge`: standard form holds only on a prefix of the path |
//! | 10 | algebra error |
//! | 11 | lattice error |
//! | 12 | spectrum or functional error |
//! | 13 | gauge-fixing error |
//! | 15 | asymptotics error |
//! | 16 | cone error |
//! | 64 | usage or configuration error (the message names the key) |
//! | 74 | file input/output error |

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ymlab_core::Error;

use config::{ConfigError, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 64,
            CliError::Core(e) => match e {
                Error::Algebra(_) => 10,
                Error::Lattice(_) => 11,
                Error::Functional(_) => 12,
                Error::Gauge(_) => 13,
                Error::Flow(_) => commands::EXIT_ERROR,
                Error::Asymptotics(_) => 15,
                Error::Cone(_) => 16,
                Error::Io(_) => 74,
            },
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "ymlab", version, about = "Lattice Yang-Mills numerical laboratory")]
struct Cli {
    /// Configuration file of `section.key = value` lines.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set flow.dt=0.02`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the gradient flow; writes trace.csv, final.ymlf and outcome.json.
    Flow {
        /// Start from this checkpoint instead of `flow.start`.
        #[arg(long, value_name = "FILE")]
        input: Option<PathBuf>,
        /// Number of seeds to run, starting at `seed`.
        #[arg(long, default_value_t = 1)]
        runs: usize,
        /// Worker threads for multiple runs.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Standard form of a stored path or checkpoint; writes
    /// standard_form.ymlp and certificate.json.
    Gauge {
        #[arg(long, value_name = "FILE")]
        input: PathBuf,
        /// Background connection (default: flat).
        #[arg(long, value_name = "FILE")]
        reference: Option<PathBuf>,
    },
    /// Lowest Jacobi eigenvalues on the Coulomb slice; writes spectrum.json.
    Spectrum {
        /// Background checkpoint instead of `spectrum.background`.
        #[arg(long, value_name = "FILE")]
        input: Option<PathBuf>,
    },
    /// Rate, Lojasiewicz and regime fits of a trace CSV; writes
    /// asymptotics.json.
    Asymptotics {
        #[arg(long, value_name = "FILE")]
        input: PathBuf,
    },
    /// Density and cone diagnostics of a built-in field; writes cone.json.
    Cone,
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::from_env();
    if let Some(path) = &cli.config {
        cfg.apply_file(path)?;
    }
    for s in &cli.set {
        cfg.apply_override(s)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<i32, CliError> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Flow { input, runs, jobs } => commands::cmd_flow(&cfg, input.as_deref(), *runs, *jobs),
        Command::Gauge { input, reference } => commands::cmd_gauge(&cfg, input, reference.as_deref()),
        Command::Spectrum { input } => commands::cmd_spectrum(&cfg, input.as_deref()),
        Command::Asymptotics { input } => commands::cmd_asymptotics(&cfg, input),
        Command::Cone => commands::cmd_cone(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 64 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let code = match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("ymlab: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
