//! Command-line entry point for utility-first evidence selection.

mod backends;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::CliError;
use crate::config::{load_file_config, DEFAULT_SEED};

#[derive(Debug, Parser)]
#[command(
    name = "evisel",
    version,
    about = "Utility-first evidence selection for retrieval-augmented generation"
)]
struct Cli {
    /// Master seed; every derived stream is a pure function of it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML config file; flags override it, it overrides defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build candidate pools from a query file.
    Pool(commands::pool::PoolArgs),
    /// Score pools with the surrogate and rank candidates.
    Rank(commands::rank::RankArgs),
    /// Full pipeline: probe, select, then generate answers.
    Run(commands::run::RunArgs),
    /// Aggregate result files into accuracy reports.
    Eval(commands::eval::EvalArgs),
    /// Price surrogate probing against same-model judging.
    Cost(commands::cost::CostArgs),
    /// Synthetic laboratory: law checks and strategy comparisons.
    Simulate(commands::simulate::SimulateArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Pool(_) => "pool",
            Command::Rank(_) => "rank",
            Command::Run(_) => "run",
            Command::Eval(_) => "eval",
            Command::Cost(_) => "cost",
            Command::Simulate(_) => "simulate",
        }
    }
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let mut problems = Vec::new();
    let file = load_file_config(cli.config.as_deref(), &mut problems);
    if !problems.is_empty() {
        return Err(CliError::Validation(problems));
    }
    let seed = cli.seed.or(file.seed).unwrap_or(DEFAULT_SEED);
    match &cli.command {
        Command::Pool(args) => commands::pool::run(args, &file, seed),
        Command::Rank(args) => commands::rank::run(args, &file, seed),
        Command::Run(args) => commands::run::run(args, &file, seed),
        Command::Eval(args) => commands::eval::run(args, &file, seed),
        Command::Cost(args) => commands::cost::run(args, &file, seed),
        Command::Simulate(args) => commands::simulate::run(args, &file, seed),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(problems)) => {
            for problem in problems {
                eprintln!("invalid: {problem}");
            }
            ExitCode::from(1)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error ({}): {e:#}", cli.command.name());
            ExitCode::from(2)
        }
        Err(CliError::PartialFailure {
            failed,
            total,
            threshold,
        }) => {
            eprintln!(
                "partial failure: {failed} of {total} queries failed, above the {threshold} threshold; outputs were still written"
            );
            ExitCode::from(3)
        }
    }
}
