//! The `concept-lens` command line.
//!
//! Every subcommand writes its artifacts under `--out`, prints exactly one
//! JSON summary line to standard output, and reports warnings and errors as
//! JSON lines on standard error. Validation errors exit with status 2, other
//! failures with status 1.

pub mod args;
mod commands;
pub mod errors;

use std::ffi::OsString;

use clap::Parser;
use serde_json::{json, Value};

pub use args::{Cli, Command};
pub use errors::{CliError, ErrorKind};

/// Parses `argv` and runs the command inside a pool of `--threads` workers.
pub fn run_from<I, T>(argv: I) -> Result<Value, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(|e| CliError::validation(e.to_string()))?;
    run(cli)
}

pub fn run(cli: Cli) -> Result<Value, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::validation("--threads must be at least 1"));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::runtime(e.to_string()))?;
    pool.install(|| commands::dispatch(cli.command))
        .map_err(|e| CliError::from_anyhow(&e))
}

/// Binary entry point; returns the process exit status.
pub fn main_with<I, T>(argv: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind as K;
            if matches!(e.kind(), K::DisplayHelp | K::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            return CliError::validation(e.to_string()).emit();
        }
    };
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => e.emit(),
    }
}

/// Writes one warning line to standard error.
pub(crate) fn warn(message: &str, detail: Value) {
    eprintln!(
        "{}",
        json!({"level": "warning", "message": message, "detail": detail})
    );
}
