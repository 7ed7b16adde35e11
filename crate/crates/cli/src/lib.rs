//! Command-line front end: fit, predict, cross-validate, simulate and
//! evaluate from a TOML configuration.

pub mod commands;
pub mod config;
pub mod error;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use commands::Overrides;
pub use config::RunConfig;
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "funboost", version, about = "Boosted distributional regression for functional responses")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    Noncyclic,
    Cyclic,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Wide-format CSV data (overrides `data.path`).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output directory (overrides `output`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Random seed (boosting, resampling or simulation, per command).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for folds and replicates.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Number of boosting iterations (fit, cv) or iteration to use (predict, evaluate).
    #[arg(long)]
    pub mstop: Option<usize>,
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model; writes model.json, risk_path.csv and effects/*.csv.
    Fit(CommonArgs),
    /// Predict parameter surfaces for new data; writes predictions.csv.
    Predict {
        #[command(flatten)]
        common: CommonArgs,
        /// Fitted model artifact.
        #[arg(long)]
        model: PathBuf,
    },
    /// Curve-level resampling for the stopping iteration; writes risk.csv,
    /// mean_risk.csv and selection.json.
    Cv(CommonArgs),
    /// Simulate a dataset with known truth; writes data.csv, truth.json,
    /// truth/*.csv and fit.toml.
    Simulate(CommonArgs),
    /// Compare a fitted model with a simulation truth; writes metrics.csv.
    Evaluate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        model: PathBuf,
        /// truth.json written by `simulate`.
        #[arg(long)]
        truth: PathBuf,
    },
}

fn overrides(a: &CommonArgs) -> Overrides {
    Overrides {
        config: a.config.clone(),
        data: a.data.clone(),
        out: a.out.clone(),
        seed: a.seed,
        mstop: a.mstop,
        method: a.method.map(|m| match m {
            MethodArg::Noncyclic => funboost::boost::Method::Noncyclic,
            MethodArg::Cyclic => funboost::boost::Method::Cyclic,
        }),
    }
}

fn init_threads(jobs: Option<usize>) -> Result<(), CliError> {
    if let Some(n) = jobs {
        if n == 0 {
            return Err(CliError::Config("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("--jobs: {e}")))?;
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let common = match &cli.command {
        Command::Fit(c) | Command::Cv(c) | Command::Simulate(c) => c,
        Command::Predict { common, .. } | Command::Evaluate { common, .. } => common,
    };
    init_threads(common.jobs)?;
    let o = overrides(common);
    match &cli.command {
        Command::Fit(_) => commands::fit(&o),
        Command::Predict { model, .. } => commands::predict(&o, model),
        Command::Cv(_) => commands::cv(&o),
        Command::Simulate(_) => commands::simulate(&o),
        Command::Evaluate { model, truth, .. } => commands::evaluate_cmd(&o, model, truth),
    }
}
