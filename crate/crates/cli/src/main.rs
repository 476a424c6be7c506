//! `adl`: experiment runner and staleness/bound calculators.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "adl", version, about = "Accumulated decoupled learning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BoundSchedule {
    /// `lr` for every update.
    Constant,
    /// `lr / (s + 1)`.
    Harmonic,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train from a TOML config and write trace.csv and summary.txt.
    Run { config: PathBuf },
    /// Print the averaged level of staleness of every module for each accumulation step.
    StalenessTable {
        /// Split size.
        #[arg(long = "K")]
        splits: u64,
        /// Accumulation steps, comma separated.
        #[arg(long = "M", value_delimiter = ',', default_value = "1,2,4,8")]
        accumulation: Vec<u64>,
    },
    /// Evaluate the convergence bounds.
    #[command(allow_negative_numbers = true)]
    Bounds(BoundsArgs),
    /// Compare two trace CSV files update by update.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        tol: f64,
    },
}

#[derive(Debug, clap::Args)]
pub struct BoundsArgs {
    /// Learning rate; defaults to the balanced constant rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Squared full-gradient norm at the current parameters.
    #[arg(long)]
    pub grad_norm_sq: Option<f64>,
    /// Bound on the squared stochastic-gradient norm.
    #[arg(long)]
    pub grad_bound: f64,
    /// Lipschitz constant of the gradient.
    #[arg(long)]
    pub lipschitz: f64,
    /// Accumulation steps; several values print one report each.
    #[arg(long = "M", value_delimiter = ',', default_value = "1")]
    pub accumulation: Vec<u64>,
    /// Sum of averaged staleness over modules.
    #[arg(long, conflicts_with = "splits")]
    pub staleness_sum: Option<f64>,
    /// Derive the staleness sum from this split size.
    #[arg(long = "K")]
    pub splits: Option<u64>,
    /// Number of updates.
    #[arg(long, default_value_t = 1)]
    pub updates: u64,
    /// Initial optimality gap.
    #[arg(long, default_value_t = 1.0)]
    pub initial_gap: f64,
    /// Scale of the balanced constant rate.
    #[arg(long, default_value_t = 1.0)]
    pub epsilon: f64,
    /// Learning-rate schedule for the ergodic bound.
    #[arg(long, value_enum, default_value_t = BoundSchedule::Constant)]
    pub schedule: BoundSchedule,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let code = match cli.command {
        Command::Run { config } => commands::run(&config),
        Command::StalenessTable {
            splits,
            accumulation,
        } => commands::staleness_table(splits, &accumulation),
        Command::Bounds(args) => commands::bounds(&args),
        Command::Compare { a, b, tol } => commands::compare(&a, &b, tol),
    };
    ExitCode::from(code)
}
