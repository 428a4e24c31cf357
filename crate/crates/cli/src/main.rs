//! `clustseg`: simulate panels, fit the joint model and its baselines, run
//! benchmarks, cross-validation and model selection, and preprocess ridership data.

mod commands;
mod error;
mod manifest;
mod output;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::error::CliError;

#[derive(Parser)]
#[command(name = "clustseg", version, about = "Joint clustering, segmentation and regression of panel time series")]
struct Cli {
    /// Log level (error, warn, info, debug, trace); RUST_LOG overrides it.
    #[arg(long, global = true, default_value = "warn")]
    log_level: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a synthetic panel with known clusters and segments.
    Simulate(commands::simulate::Args),
    /// Fit one method to a panel.
    Fit(commands::fit::Args),
    /// Synthetic benchmark over a grid of sizes and coefficient scales.
    Benchmark(commands::benchmark::Args),
    /// Individual-wise cross-validation of several methods.
    Crossval(commands::crossval::Args),
    /// Choose the number of clusters with the slope heuristic.
    SelectK(commands::select_k::Args),
    /// Turn raw ridership records into a normalized panel.
    Preprocess(commands::preprocess::Args),
}

fn run(cli: Cli) -> Result<(), CliError> {
    let argv: Vec<String> = std::env::args().collect();
    match cli.command {
        Command::Simulate(a) => commands::simulate::run(a, &argv),
        Command::Fit(a) => commands::fit::run(a, &argv),
        Command::Benchmark(a) => commands::benchmark::run(a, &argv),
        Command::Crossval(a) => commands::crossval::run(a, &argv),
        Command::SelectK(a) => commands::select_k::run(a, &argv),
        Command::Preprocess(a) => commands::preprocess::run(a, &argv),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .parse_filters(&cli.log_level)
        .parse_env("RUST_LOG")
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}
