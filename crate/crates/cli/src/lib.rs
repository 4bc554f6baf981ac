//! Command-line driver: reads a run configuration, values the sources and
//! writes reports.

pub mod commands;
pub mod config;
pub mod error;
pub mod problem;
pub mod report;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{run, Outcome};
pub use error::CliError;
pub use report::{Report, SCHEMA_VERSION};

#[derive(Debug, Parser)]
#[command(
    name = "shapsrc",
    version,
    about = "Value source corpora for transfer with sampled Shapley values"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub options: Options,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate source values with the truncated, cached sampler.
    Value,
    /// Enumerate every subset for exact values (at most 16 sources).
    Exact,
    /// Single-source, leave-one-out, random and greedy baselines.
    Baselines,
    /// Choose sources by thresholding values on a dev target.
    Select {
        /// Report from `value` or `exact` whose values are thresholded.
        #[arg(long)]
        values: Option<PathBuf>,
    },
    /// Fit a ranker on held-out valuations and predict values for a target.
    Rank {
        /// CSV with header target,source,<features>.
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        target: Option<String>,
    },
}

#[derive(Debug, Clone, Args)]
pub struct Options {
    #[arg(long, global = true, default_value = "shapsrc.toml")]
    pub config: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Threads running oracle trainings; never changes results.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Persistent score cache file.
    #[arg(long, global = true)]
    pub cache: Option<PathBuf>,
    /// Reuse scores already in the cache file instead of starting fresh.
    #[arg(long, global = true)]
    pub resume: bool,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}
