use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "deduct", version, about = "Deductive estimation of survival probabilities under double-sampling")]
pub struct Cli {
    /// Worker threads for replicate and Gateaux parallelism (default: all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate mortality 1 - P(T > t) from a CSV dataset.
    Estimate(EstimateArgs),
    /// Run the replicate simulation and write a bias/coverage/SD table.
    Simulate(SimulateArgs),
    /// Descriptive statistics of the generative models from one large draw.
    Describe(DescribeArgs),
    /// Write a simulated dataset, or the bundled synthetic cohort, as CSV.
    Generate(GenerateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    De,
    KmS,
    KmC,
}

/// Flags of `estimate`. Anything left unset falls back to `--config`, then to
/// the built-in default.
#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub z_cols: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    pub w_cols: Option<Vec<String>>,
    /// cox or lognormal.
    #[arg(long)]
    pub variant: Option<String>,
    /// Comma-separated time points.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, conflicts_with = "t_grid")]
    pub t: Option<Vec<f64>>,
    /// Evenly spaced time points `a:b:step`, both ends included.
    #[arg(long)]
    pub t_grid: Option<String>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Report the estimate at alpha = 0 without solving.
    #[arg(long)]
    pub alpha_zero: bool,
    /// Intercept-only double-sampling model.
    #[arg(long)]
    pub wrong_s: bool,
    /// Also use w in the r_obs = 1 survival fits.
    #[arg(long)]
    pub w_in_observed: bool,
    /// Keep only double-samples with c - L <= gamma.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// w column holding the dropout time (default: the first w column).
    #[arg(long)]
    pub gamma_col: Option<String>,
    #[arg(long, value_enum)]
    pub estimator: Option<Method>,
    /// Bootstrap resamples for km-s.
    #[arg(long)]
    pub n_boot: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write the discretized support to this CSV.
    #[arg(long)]
    pub dump_support: Option<PathBuf>,
    /// Write the working-model fit summary to this JSON file.
    #[arg(long)]
    pub dump_fits: Option<PathBuf>,
    /// TOML file with defaults for any of the flags above.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output CSV (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Run-metadata JSON (default: `<out>.json` when --out is given).
    #[arg(long)]
    pub sidecar: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_delimiter = ',')]
    pub gm: Option<Vec<u8>>,
    #[arg(long, value_delimiter = ',')]
    pub n: Option<Vec<usize>>,
    #[arg(long)]
    pub reps: Option<usize>,
    /// Comma-separated estimator keys, e.g. de-cox,de-ln,km-s,km-c.
    #[arg(long, value_delimiter = ',')]
    pub estimators: Option<Vec<String>>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub t: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub n_boot: Option<usize>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub sidecar: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DescribeArgs {
    #[arg(long, value_delimiter = ',', default_value = "1,2")]
    pub gm: Vec<u8>,
    #[arg(long, default_value_t = 1_000_000)]
    pub n_mc: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, required_unless_present = "cohort")]
    pub gm: Option<u8>,
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 0)]
    pub stream: u64,
    /// The bundled synthetic cohort instead of a generative model.
    #[arg(long, conflicts_with = "gm")]
    pub cohort: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
