mod commands;
mod io;
mod manifest;
mod settings;

use anyhow::Result;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "anchor-uq",
    version,
    about = "Anchored uncertainty estimation, baselines, and sequential optimization",
    after_help = "The environment variable ANCHOR_UQ_SEED sets the default seed for every \
                  command; explicit --seed flags override it."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an uncertainty estimator on a CSV dataset and write a checkpoint
    Fit(commands::fit::FitArgs),
    /// Load a checkpoint and emit (x, mu, sigma) predictions as CSV
    Uq(commands::uq::UqArgs),
    /// Run sequential-optimization sweeps and summarize AUC per surrogate
    Bo(commands::bo::BoArgs),
    /// Export kernel spectra for a set of input-domain shifts
    Ntk(commands::ntk::NtkArgs),
    /// List the benchmark-function suite
    Bench(commands::bench::BenchArgs),
    /// Compute calibration and outlier-detection metrics from prediction CSVs
    Metrics(commands::metrics::MetricsArgs),
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Fit(args) => commands::fit::run(args),
        Command::Uq(args) => commands::uq::run(args),
        Command::Bo(args) => commands::bo::run(args),
        Command::Ntk(args) => commands::ntk::run(args),
        Command::Bench(args) => commands::bench::run(args),
        Command::Metrics(args) => commands::metrics::run(args),
    }
}
