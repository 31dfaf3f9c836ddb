//! `alphasharpe` command-line front-end: argument parsing, configuration
//! resolution and the subcommands.

pub mod commands;
pub mod config;
pub mod reference;

use alphasharpe_core::{Error, ErrorClass, Result};
use clap::{Parser, Subcommand};

pub use config::{Overrides, RunConfig};

#[derive(Parser, Debug)]
#[command(
    name = "alphasharpe",
    version,
    about = "Score, evaluate, backtest and evolve risk-adjusted return metrics"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Per-asset score table for the selected metrics
    Score(Overrides),
    /// Cross-validated rank alignment of each metric with future Sharpe ratios
    Evaluate(Overrides),
    /// Top-fraction selection and allocator backtests on the holdout
    Backtest(Overrides),
    /// Evolve metric descriptors by crossover, mutation and selection
    Evolve(Overrides),
    /// Write a synthetic market to the output directory
    Synth(Overrides),
}

impl Command {
    pub fn overrides(&self) -> &Overrides {
        match self {
            Command::Score(o)
            | Command::Evaluate(o)
            | Command::Backtest(o)
            | Command::Evolve(o)
            | Command::Synth(o) => o,
        }
    }
}

/// Process exit status for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e.class() {
        ErrorClass::Config => 2,
        ErrorClass::Data => 3,
        ErrorClass::Numerical => 4,
    }
}

/// Runs one subcommand on a worker pool sized by `threads`.
pub fn run(command: &Command) -> Result<String> {
    let cfg = RunConfig::resolve(command.overrides())?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| match command {
        Command::Score(_) => commands::cmd_score(&cfg),
        Command::Evaluate(_) => commands::cmd_evaluate(&cfg),
        Command::Backtest(_) => commands::cmd_backtest(&cfg),
        Command::Evolve(_) => commands::cmd_evolve(&cfg),
        Command::Synth(_) => commands::cmd_synth(&cfg),
    })
}
