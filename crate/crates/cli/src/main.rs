//! `qwalk`: verification, dispersion tables, packet evolution, symmetry
//! orbits and Maxwell-sector studies.
//!
//! Exit codes: 0 success, 1 verification or I/O failure, 2 usage or
//! validation error.

mod commands;
mod config;
mod output;

use std::io::Write;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Outcome;
use config::{ConfigFile, Format, Global};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Failure(String),
}

#[derive(Debug, Parser)]
#[command(name = "qwalk", version, about = "Quantum walks on the BCC lattice")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Unitarity, isotropy and spectrum checks for one walk.
    Verify(commands::VerifyArgs),
    /// Dispersion, helicity and group velocity over a momentum grid.
    Dispersion(commands::DispersionArgs),
    /// Evolve a Gaussian packet and tabulate its observables.
    Evolve(commands::EvolveArgs),
    /// Orbit of a momentum under the deformed Lorentz action.
    Orbit(commands::OrbitArgs),
    /// Maxwell residual and commutator along a ladder of weight widths.
    Maxwell(commands::MaxwellArgs),
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = ConfigFile::load(cli.global.config.as_deref())?;
    let global = cli.global.merge(file.get()?);
    let threads = global.threads.unwrap_or(0);
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Failure(format!("cannot start thread pool: {e}")))?;
    let seed = global.seed.unwrap_or(0);

    let (outcome, default_format) = match cli.command {
        Command::Verify(a) => (commands::verify(a, &file, seed)?, Format::Json),
        Command::Dispersion(a) => (commands::dispersion_table(a, &file)?, Format::Csv),
        Command::Evolve(a) => (commands::evolve(a, &file)?, Format::Csv),
        Command::Orbit(a) => (commands::orbit_table(a, &file)?, Format::Csv),
        Command::Maxwell(a) => (commands::maxwell_table(a, &file)?, Format::Csv),
    };
    let format = global.format.unwrap_or(default_format);

    let mut sink: Box<dyn Write> = match &global.out {
        Some(path) => Box::new(std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| {
            CliError::Failure(format!("cannot create {}: {e}", path.display()))
        })?)),
        None => Box::new(std::io::stdout().lock()),
    };
    let io = |e: anyhow::Error| CliError::Failure(format!("write failed: {e}"));
    let failure = match outcome {
        Outcome::Table(t) => {
            t.write(format, &mut sink).map_err(io)?;
            None
        }
        Outcome::Report { table, json, failure } => {
            match format {
                Format::Json => {
                    serde_json::to_writer_pretty(&mut sink, &json).map_err(|e| io(e.into()))?;
                    writeln!(sink).map_err(|e| io(e.into()))?;
                }
                Format::Csv => table.write(format, &mut sink).map_err(io)?,
            }
            failure
        }
    };
    sink.flush().map_err(|e| io(e.into()))?;
    match failure {
        Some(condition) => Err(CliError::Failure(format!("verification failed: {condition}"))),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Failure(msg)) => {
            eprintln!("qwalk: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("qwalk: {msg}");
            ExitCode::from(2)
        }
    }
}
