//! Batch front end over the extrapolation library: one JSON config in,
//! `result.json` + CSV artifacts + `manifest.json` out.
//!
//! Exit codes: 0 on success, 1 for configuration errors, 2 for numerical
//! failures. Every error message names the violated precondition.

mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

/// Spectral factorization, optimal and minimax-robust extrapolation, and
/// Monte Carlo validation for sequences with stationary increments.
#[derive(Parser)]
#[command(name = "increx", version, disable_help_subcommand = true)]
struct Cli {
    /// Command to run (factorize, extrapolate, predict, minimax,
    /// saddle-check, simulate); optional when the config's `command` field
    /// is set, and must agree with it when both are given.
    command: Option<String>,

    /// Path to the JSON run configuration.
    #[arg(long)]
    config: PathBuf,

    /// Directory artifacts are written into (created if missing).
    #[arg(long, default_value = ".")]
    out: PathBuf,

    /// Overrides the config's random seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Overrides the config's frequency grid size.
    #[arg(long)]
    grid: Option<usize>,

    /// Asserts the density class of a minimax or saddle-check config
    /// (power-cap, moments, band, neighborhood).
    #[arg(long)]
    class: Option<String>,

    /// Suppresses the artifact listing on stdout.
    #[arg(long)]
    quiet: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    let invocation = run::Invocation {
        command: cli.command,
        config: cli.config,
        out: cli.out,
        seed: cli.seed,
        grid: cli.grid,
        class: cli.class,
        quiet: cli.quiet,
    };
    match run::run(&invocation) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
