//! Command-line front end: manifest-driven batch runs of the pipeline.

pub mod cache;
mod commands;
pub mod config;
pub mod manifest;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

pub use cache::{CachedFeatures, FeatureCache, CACHE_ENV};
pub use commands::{GroupReport, RecordFailure, RunReport};
pub use config::{PipelineConfig, PredictorConfig, PredictorKind};
pub use manifest::{Manifest, UtteranceRecord};

use crate::Result;

pub const DEFAULT_OUTPUT_DIR: &str = "modispi_out";

#[derive(Debug, Parser)]
#[command(name = "modispi", version, about = "Hearing-loss-aware speech intelligibility prediction")]
pub struct Cli {
    /// Pipeline configuration (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for initialization, shuffling and augmentation.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write hearing-loss-processed envelopes and resynthesized audio.
    Simulate(ManifestArgs),
    /// Write clean and degraded STM tensors.
    Stm(ManifestArgs),
    /// Write NCC matrices as CSV and binary containers.
    Ncc(ManifestArgs),
    /// Write two-channel model input images.
    Preprocess(ManifestArgs),
    /// Fit the logistic head or train the transformer.
    Train(TrainArgs),
    /// Score every record and report RMSE and correlation.
    Predict(PredictArgs),
    /// Compare an existing scores CSV against manifest scores.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
pub struct ManifestArgs {
    #[arg(long)]
    pub manifest: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_enum)]
    pub predictor: Option<PredictorKind>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub val_fraction: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_enum)]
    pub predictor: Option<PredictorKind>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub logistic_params: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// CSV with `utterance_id,score_0_1,score_0_100`.
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
}

/// Whether every record succeeded.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Success,
    RecordFailures(usize),
}

/// Writes through a temporary sibling and renames into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn run(cli: Cli) -> Result<Outcome> {
    let mut config = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.train.seed = seed;
    }
    let output_dir = cli
        .output_dir
        .clone()
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR));
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cli.jobs {
        if j == 0 {
            return crate::error::invalid("--jobs must be at least 1");
        }
        builder = builder.num_threads(j);
    }
    let pool = builder
        .build()
        .map_err(|e| crate::Error::InvalidInput(format!("thread pool: {e}")))?;
    let ctx = commands::Context {
        config,
        output_dir,
        cache: FeatureCache::from_env(),
    };
    pool.install(|| commands::dispatch(&ctx, cli.command))
}
