//! `sojourn`: estimate Berman constants, evaluate limit laws and run the
//! Monte Carlo comparisons.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sojourn_core::covariance::ModelSpec;
use sojourn_core::experiments::HorizonRule;
use sojourn_core::heavy_tail::HorizonModel;

#[derive(Debug, Parser)]
#[command(name = "sojourn", version, about = "Sojourn times of stationary Gaussian processes over random horizons")]
struct Cli {
    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate the Berman function B_α(x) and the jump law F_α.
    EstimateConstant(EstimateArgs),
    /// Evaluate the limit laws on a (u, x) grid.
    Predict(PredictArgs),
    /// Monte Carlo sweep against the limit laws, driven by a JSON config.
    Compare(CompareArgs),
    /// Compound Poisson convergence on horizons l·m(u).
    CpCheck(CpCheckArgs),
    /// Ratio check on intermediate horizons A(u).
    RatioCheck(RatioCheckArgs),
}

#[derive(Debug, Args)]
struct EstimateArgs {
    #[arg(long)]
    alpha: f64,
    /// Half-width of the window [-S, S].
    #[arg(long = "S", default_value_t = 50.0)]
    s_max: f64,
    /// Grid step; default min(0.01, 0.01^{2/α}).
    #[arg(long)]
    step: Option<f64>,
    #[arg(long = "R", default_value_t = 100_000)]
    replications: usize,
    #[arg(long, value_delimiter = ',', num_args = 1.., default_value = "0")]
    x_grid: Vec<f64>,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PredictArgs {
    /// e.g. `frac-ou:alpha=1`, `fbm-increment:alpha=1.5,a=2`.
    #[arg(long)]
    model: ModelSpec,
    /// e.g. `exponential:mean=1`, `pareto:lambda=0.5`, `log-pareto:t0=e`.
    #[arg(long)]
    horizon: HorizonModel,
    #[arg(long)]
    berman_table: PathBuf,
    #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
    u_grid: Vec<f64>,
    #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
    x_grid: Vec<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CheckArgs {
    #[arg(long)]
    model: ModelSpec,
    #[arg(long)]
    berman_table: PathBuf,
    #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
    u_grid: Vec<f64>,
    #[arg(long, value_delimiter = ',', num_args = 1.., default_value = "0")]
    x_grid: Vec<f64>,
    #[arg(long = "R", default_value_t = 10_000)]
    replications: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 10.0)]
    points_per_unit: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CpCheckArgs {
    #[command(flatten)]
    common: CheckArgs,
    #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
    l_grid: Vec<f64>,
    /// `l0,l1` with 0 < l0 < l1.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    l_bounds: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
struct RatioCheckArgs {
    #[command(flatten)]
    common: CheckArgs,
    /// `sqrt-m-over-v`, `constant:value=..` or `fraction-of-m:fraction=..`.
    #[arg(long, default_value = "sqrt-m-over-v")]
    rule: HorizonRule,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match cli.command {
        Command::EstimateConstant(a) => commands::estimate_constant(a),
        Command::Predict(a) => commands::predict(a),
        Command::Compare(a) => commands::compare(a),
        Command::CpCheck(a) => commands::cp_check(a),
        Command::RatioCheck(a) => commands::ratio_check(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let schema = matches!(e.downcast_ref(), Some(sojourn_core::Error::Config(_)));
            ExitCode::from(if schema { 2 } else { 1 })
        }
    }
}
