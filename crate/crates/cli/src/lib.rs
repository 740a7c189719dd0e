//! The `plgen` command-line tool.

mod args;
mod commands;
mod config;
mod error;

use std::ffi::OsString;

use clap::Parser;

pub use args::Cli;
pub use config::{FileConfig, SEED_VAR};
pub use error::{CliError, CliResult};

/// Parses `argv` and runs the selected subcommand.
pub fn run<I, T>(argv: I) -> CliResult
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return Ok(());
        }
        Err(e) => return Err(CliError::Usage(e.render().to_string().trim_end().to_owned())),
    };
    commands::dispatch(cli)
}
