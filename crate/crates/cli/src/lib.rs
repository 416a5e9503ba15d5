//! Command-line front end for `cvrelay`: argument parsing, config files and
//! CSV/JSON output.

#![allow(clippy::needless_range_loop)]

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod grid;
pub mod output;

use std::ffi::OsString;
use std::io::Write;

use clap::error::ErrorKind;
use clap::Parser;

pub use config::{load_config, Config};
pub use error::CliError;
pub use output::{emit, Format, Table, Value};

/// Sizes the global rayon pool from `CVRELAY_THREADS`, if set.
fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("CVRELAY_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        CliError::Usage(format!(
            "CVRELAY_THREADS must be a positive integer, got '{raw}'"
        ))
    })?;
    // an already initialised pool (repeated in-process runs) is kept
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
    Ok(())
}

/// Runs one invocation and returns the process exit code:
/// 0 success, 1 I/O failure, 2 invalid usage or parameters, 3 non-convergence.
pub fn run<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match args::Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{e}");
                    0
                }
                _ => {
                    let _ = write!(stderr, "{e}");
                    2
                }
            };
        }
    };
    let result = configure_threads().and_then(|()| commands::execute(cli.command, stdout));
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "cvrelay: {e}");
            e.exit_code()
        }
    }
}
