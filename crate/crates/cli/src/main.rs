//! `diffexpose` command-line interface.
//!
//! Exit codes:
//! - 0: success
//! - 1: no difference found (`pair`) or some pair ended in error (`run`)
//! - 2: bad input, I/O or harness failure
//! - 3: provider authentication failure
//! - 4: the example test already differs between the versions
//! - 5: transformation unsupported
//! - 6: not enough records for a decile analysis

mod campaign;
mod report;
mod setup;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

pub const EXIT_NOT_FOUND: u8 = 1;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_AUTH: u8 = 3;
pub const EXIT_EXAMPLE_DIFFERS: u8 = 4;
pub const EXIT_UNSUPPORTED: u8 = 5;
pub const EXIT_INSUFFICIENT: u8 = 6;

/// An error carrying the process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Failure {}

pub fn fail(code: u8, message: impl Into<String>) -> anyhow::Error {
    Failure { code, message: message.into() }.into()
}

#[derive(Parser)]
#[command(name = "diffexpose", version, about = "Generate difference-exposing tests for program pairs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a campaign over a JSONL manifest of pairs.
    Run(campaign::RunArgs),
    /// Search for a difference-exposing test for one pair.
    Pair(campaign::PairArgs),
    /// Rewrite a stdin/stdout script into function form via the harness.
    Transform {
        script: PathBuf,
    },
    /// Summarize run records and optionally run a decile analysis.
    Report(report::ReportArgs),
    /// Select program pairs from a submission log.
    Select(report::SelectArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => campaign::run(args),
        Command::Pair(args) => campaign::pair(args),
        Command::Transform { script } => report::transform(&script),
        Command::Report(args) => report::report(args),
        Command::Select(args) => report::select(args),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            let code = err.downcast_ref::<Failure>().map_or(EXIT_INPUT, |f| f.code);
            eprintln!("error: {err:#}");
            ExitCode::from(code)
        }
    }
}
