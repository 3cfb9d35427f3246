mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::exit_code;
use crate::config::{Command, RunArgs, RunConfig};

#[derive(Parser)]
#[command(
    name = "minimax-rd",
    version,
    about = "Minimax-weighted estimates and bias-aware intervals for regression discontinuity designs",
    after_help = "\
Exit codes:
  0  success
  2  input could not be parsed (CSV, flags, config file)
  3  invalid design or configuration (including a missing bound)
  4  the weight program is infeasible
  5  the solver failed

Examples:
  minimax-rd estimate --input data.csv --x-cols score --y-col y --cutoff 0 --bound 0.5 --out run/
  minimax-rd sensitivity --input data.csv --x-cols score --y-col y --cutoff 0 --b-grid 0.1,0.2,0.5
  minimax-rd replay run/config-echo.json --out rerun/"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Optimized weights, point estimate and interval (report.json, weights.csv)
    Estimate(RunArgs),
    /// One interval per bound in --b-grid (sensitivity.csv)
    Sensitivity(RunArgs),
    /// Worst-case MSE of the optimized weights against local linear regression (compare.csv)
    CompareLlr(RunArgs),
    /// Re-run a saved config-echo.json
    Replay {
        config: PathBuf,
        /// Write outputs here instead of the recorded directory
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match cli.command {
        Cmd::Estimate(args) => Ok(RunConfig::from_args(Command::Estimate, args)),
        Cmd::Sensitivity(args) => Ok(RunConfig::from_args(Command::Sensitivity, args)),
        Cmd::CompareLlr(args) => Ok(RunConfig::from_args(Command::CompareLlr, args)),
        Cmd::Replay { config, out } => RunConfig::load(&config).map(|mut c| {
            if let Some(out) = out {
                c.out = out;
            }
            c
        }),
    };
    let result = config.and_then(|c| commands::run(&c));
    match result {
        Ok(0) => ExitCode::SUCCESS,
        Ok(code) => {
            eprintln!("error: some rows failed; see the status column");
            ExitCode::from(code as u8)
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err) as u8)
        }
    }
}
