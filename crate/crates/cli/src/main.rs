//! `rigdepth`: command-line tools for surround-camera depth datasets.
//!
//! Machine-readable results go to stdout as JSON; progress and diagnostics
//! go to stderr. Exit codes: 0 success, 1 usage error, 2 data error,
//! 3 failed numeric check.

mod commands;
mod dataset;
mod error;
mod overrides;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use error::CliError;

#[derive(Parser, Debug)]
#[command(
    name = "rigdepth",
    version,
    about = "Tools for surround-camera depth datasets: synthesis, pseudo-depth, warping, and evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    GenSynthetic(commands::gen::GenArgs),
    PseudoDepth(commands::pseudo::PseudoArgs),
    Warp(commands::warp::WarpArgs),
    Evaluate(commands::evaluate::EvaluateArgs),
    Consistency(commands::consistency::ConsistencyArgs),
    CvtCheck(commands::cvtcheck::CvtCheckArgs),
}

/// Applies the `SURROUND_THREADS` cap to the global worker pool before any
/// parallel work runs. Unset means the default (one worker per core).
fn init_threads() -> Result<(), CliError> {
    let value = match std::env::var("SURROUND_THREADS") {
        Ok(v) => v,
        Err(std::env::VarError::NotPresent) => return Ok(()),
        Err(e) => {
            return Err(CliError::Usage(format!(
                "SURROUND_THREADS is not valid unicode: {e}"
            )))
        }
    };
    let threads: usize = value.trim().parse().map_err(|_| {
        CliError::Usage(format!(
            "SURROUND_THREADS must be a positive integer, got `{value}`"
        ))
    })?;
    if threads == 0 {
        return Err(CliError::Usage(
            "SURROUND_THREADS must be at least 1".into(),
        ));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot apply SURROUND_THREADS: {e}")))
}

fn run() -> Result<(), CliError> {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests print to stdout and succeed; real
            // parse errors print to stderr and exit as usage errors.
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    init_threads()?;
    match &cli.command {
        Command::GenSynthetic(args) => commands::gen::run(args),
        Command::PseudoDepth(args) => commands::pseudo::run(args),
        Command::Warp(args) => commands::warp::run(args),
        Command::Evaluate(args) => commands::evaluate::run(args),
        Command::Consistency(args) => commands::consistency::run(args),
        Command::CvtCheck(args) => commands::cvtcheck::run(args),
    }
}

fn main() {
    if let Err(e) = run() {
        eprintln!("{e}");
        std::process::exit(e.exit_code());
    }
}
