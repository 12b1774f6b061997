//! Command-line surface of the laboratory: config ingestion, the subcommands,
//! result persistence with run manifests, and the verify pipeline.

pub mod args;
pub mod commands;
pub mod error;
pub mod input;
pub mod manifest;
pub mod report;
pub mod verify;

use std::ffi::OsString;

use clap::error::ErrorKind;
use clap::Parser;

use crate::args::Cli;
use crate::error::{CliError, EXIT_OK, EXIT_USAGE};

fn emit(err: &CliError) {
    eprintln!("{}", serde_json::to_string(&err.to_json()).expect("json value"));
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    EXIT_OK
                }
                kind => {
                    let message = e.render().to_string();
                    let first = message.lines().next().unwrap_or("").trim_start_matches("error: ");
                    emit(&CliError::usage(first).with("kind", kind.to_string()).with("detail", message.trim()));
                    EXIT_USAGE
                }
            };
        }
    };
    let name = cli.command.name();
    if let Some(n) = cli.threads {
        if n == 0 {
            emit(&CliError::usage("--threads must be at least 1").with("command", name));
            return EXIT_USAGE;
        }
        // a pool already built in this process keeps its size
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let env = input::Env::new(cli.table_cache.clone());
    match commands::dispatch(&cli.command, &env) {
        Ok(code) => code,
        Err(e) => {
            let e = e.with("command", name);
            emit(&e);
            e.exit
        }
    }
}
