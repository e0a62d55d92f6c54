#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

use config::{RunArgs, RunConfig, SystemArgs};

/// Exit status for any failure before a verdict is reached.
const EXIT_ERROR: u8 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] conefield::Error),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config {}: {msg}", path.display())]
    Config { path: PathBuf, msg: String },
    #[error("{0}")]
    Usage(String),
}

#[derive(Debug, Parser)]
#[command(name = "conefield", version, about = "Cone fields and differential positivity from Koopman eigenfunctions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Locate the attractor, build cones and PF field, verify positivity
    Analyze {
        #[command(flatten)]
        system: SystemArgs,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Verify positivity of computed or tabulated cones
    Verify {
        #[command(flatten)]
        system: SystemArgs,
        #[command(flatten)]
        run: RunArgs,
        /// Cone rows in the cone-grid CSV layout
        #[arg(long)]
        cone_file: Option<PathBuf>,
    },
    /// Integrate one trajectory with its tangent frame
    Trace {
        #[command(flatten)]
        system: SystemArgs,
        #[command(flatten)]
        run: RunArgs,
        /// Initial state, comma separated
        #[arg(long, allow_hyphen_values = true, value_delimiter = ',', required = true)]
        x0: Vec<f64>,
        /// Final time
        #[arg(long)]
        t: f64,
    },
    /// Write eigenfunction, cone, PF and level-set grids without verifying
    ExportGrid {
        #[command(flatten)]
        system: SystemArgs,
        #[command(flatten)]
        run: RunArgs,
    },
}

fn run(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Analyze { system, run } => commands::analyze(&RunConfig::resolve(&system, &run)?),
        Command::Verify { system, run, cone_file } => {
            commands::verify(&RunConfig::resolve(&system, &run)?, cone_file.as_deref())
        }
        Command::Trace { system, run, x0, t } => commands::trace(&RunConfig::resolve(&system, &run)?, &x0, t),
        Command::ExportGrid { system, run } => commands::export_grid(&RunConfig::resolve(&system, &run)?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { 0 };
            e.print().ok();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
