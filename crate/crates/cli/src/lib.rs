//! The `wtraj` command line.

pub mod commands;
pub mod config;

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(name = "wtraj", version, about = "Weight-trajectory prediction after bariatric surgery")]
pub struct Cli {
    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// TOML file with defaults for any flag; flags win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a synthetic cohort and write it as CSV.
    Simulate(SimulateArgs),
    /// Select features, train the model and validate it on held-out patients.
    Train(TrainArgs),
    /// Print the trees of a model.
    Inspect(InspectArgs),
    /// Evaluate a model on a cohort.
    Validate(ValidateArgs),
    /// Render metric reports as a per-cohort or per-operation table.
    Report(ReportArgs),
    /// Predict the trajectory of one profile.
    Predict(PredictArgs),
    /// Serve a model over HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Generator spec (TOML or JSON); defaults are used for missing keys.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub noise_sd: Option<f64>,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub cohort: PathBuf,
    /// Model artifact to write.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Internal validation report (JSON); default: next to the artifact.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Fraction of patients used for training.
    #[arg(long)]
    pub split: Option<f64>,
    /// Comma-separated visit months.
    #[arg(long, value_delimiter = ',')]
    pub timepoints: Option<Vec<u32>>,
    /// Comma-separated model features; skips LASSO selection.
    #[arg(long, value_delimiter = ',')]
    pub features: Option<Vec<String>>,
    #[arg(long)]
    pub imputations: Option<usize>,
    /// Bootstrap replicates for confidence intervals (0 skips them).
    #[arg(long)]
    pub bootstrap: Option<usize>,
    /// Also score pruned CART, random forest and linear regression.
    #[arg(long)]
    pub compare: bool,
    #[arg(long)]
    pub forest_trees: Option<usize>,
    /// Creation time recorded in the artifact.
    #[arg(long)]
    pub created_at: Option<String>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long, short)]
    pub model: PathBuf,
    /// Only this visit month.
    #[arg(long)]
    pub month: Option<u32>,
    /// List surrogate splits under each node.
    #[arg(long)]
    pub surrogates: bool,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long, short)]
    pub model: PathBuf,
    #[arg(long)]
    pub cohort: PathBuf,
    /// Metric report (JSON).
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Bland-Altman pairs (TSV).
    #[arg(long)]
    pub bland_altman: Option<PathBuf>,
    #[arg(long)]
    pub bootstrap: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TableKind {
    /// One row per cohort plus their weighted mean.
    Cohorts,
    /// One row per operation.
    Operations,
    /// Every cell, tab-separated.
    Tsv,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Metric reports written by `train` or `validate`, as `path` or `name=path`.
    #[arg(required = true)]
    pub reports: Vec<String>,
    #[arg(long, value_enum, default_value = "cohorts")]
    pub table: TableKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SmokerArg {
    Yes,
    No,
    Unknown,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long, short)]
    pub model: PathBuf,
    #[arg(long)]
    pub age: f64,
    /// Preoperative weight in kg.
    #[arg(long)]
    pub weight: f64,
    /// Height in m.
    #[arg(long)]
    pub height: f64,
    #[arg(long, value_enum, default_value = "unknown")]
    pub smoker: SmokerArg,
    /// none, pre or t2d.
    #[arg(long, default_value = "none")]
    pub diabetes: String,
    #[arg(long, default_value_t = 0.0)]
    pub diabetes_years: f64,
    /// RYGB, SG or AGB.
    #[arg(long)]
    pub operation: String,
    /// kg, bmi, twl or ewl.
    #[arg(long, default_value = "kg")]
    pub units: String,
    /// Print the smoothed curve instead of the visit values.
    #[arg(long)]
    pub curve: bool,
    /// Print the service's JSON response.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, short)]
    pub model: PathBuf,
    /// Address to listen on (default 127.0.0.1:8080).
    #[arg(long)]
    pub bind: Option<String>,
    /// Browser origin allowed to call the API; repeatable.
    #[arg(long = "cors-origin")]
    pub cors_origins: Vec<String>,
    /// Poll the artifact for changes every this many seconds (0 disables).
    #[arg(long)]
    pub reload_secs: Option<u64>,
}

/// Runs a parsed command line.
pub fn run(cli: Cli) -> anyhow::Result<()> {
    let config = match &cli.config {
        Some(p) => config::Config::load(p)?,
        None => config::Config::default(),
    };
    let threads = cli.threads.or(config.threads).unwrap_or(0);
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| anyhow::anyhow!("cannot start worker pool: {e}"))?;
    commands::dispatch(cli.command, &config)
}
