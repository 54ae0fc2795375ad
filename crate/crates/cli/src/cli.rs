use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "mirfs", version, about = "Exact likelihood, score and information for finite-state HMMs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a path and write it as CSV.
    Simulate(SimulateArgs),
    /// Evaluate log-likelihood, score and observed information.
    Eval(EvalArgs),
    /// Maximum-likelihood fit by Newton-Raphson, best of several starts.
    Fit(FitArgs),
    /// Compare the core against brute-force and finite-difference oracles.
    Check(CheckArgs),
    /// Ergodic diagnostics over a grid of path lengths.
    Diagnose(DiagnoseArgs),
}

#[derive(Debug, Args)]
pub struct ModelArg {
    /// Model specification (JSON).
    #[arg(long)]
    pub model: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArg,
    /// Parameter values: `0.1,0.2`, `a=0.1,b=0.2` or `@file.json`.
    #[arg(long, allow_hyphen_values = true)]
    pub theta: String,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub seed: u64,
    /// Output CSV; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub model: ModelArg,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    pub theta: String,
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u8).range(0..=2))]
    pub order: u8,
    /// Output JSON; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write per-step increments as CSV.
    #[arg(long)]
    pub increments: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub model: ModelArg,
    #[arg(long)]
    pub data: PathBuf,
    /// Starting points separated by `;`. Defaults to the box midpoint.
    #[arg(long, allow_hyphen_values = true)]
    pub inits: Option<String>,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 100)]
    pub max_iter: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the iteration trace of the best start as CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[command(flatten)]
    pub model: ModelArg,
    /// Data to check on; small paths are simulated when absent.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Evaluation point; defaults to the box midpoint.
    #[arg(long, allow_hyphen_values = true)]
    pub theta: Option<String>,
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u8).range(0..=2))]
    pub order: u8,
    /// Length of simulated paths.
    #[arg(long, default_value_t = 8)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// JSON report in addition to the table on stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Adds this amount to first-order emission derivatives.
    #[arg(long, hide = true)]
    pub inject_fault: Option<f64>,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub model: ModelArg,
    #[arg(long, allow_hyphen_values = true)]
    pub theta: String,
    /// Path lengths, comma separated.
    #[arg(long, default_value = "1000,10000,100000")]
    pub grid: String,
    #[arg(long, default_value_t = 20)]
    pub replications: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
