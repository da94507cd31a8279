use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use stabletree::{BuildConfig, LabelMode, LeafRule, SamplePolicy, SamplerConfig};

#[derive(Debug, Parser)]
#[command(name = "stabletree", version, about = "Distill a classifier into one stable decision tree")]
pub struct Cli {
    /// Worker threads (defaults to all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a labeled sample from the built-in synthetic benchmark.
    Simulate(SimulateArgs),
    /// Fit the built-in random forest oracle.
    FitOracle(FitOracleArgs),
    /// Distill an oracle into one tree.
    Distill(DistillArgs),
    /// Compare a tree with its oracle on test rows.
    Evaluate(EvaluateArgs),
    /// Rebuild a tree under fresh seeds and tally the structures.
    Stability(StabilityArgs),
    /// Render a tree as DOT or canonical JSON.
    Export(ExportArgs),
    /// Answer line-protocol requests on stdin with a fitted forest.
    ServeOracle(ServeOracleArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the benchmark schema here.
    #[arg(long)]
    pub schema_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitOracleArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub schema: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub trees: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub min_leaf: usize,
    /// Defaults to the rounded-up square root of the column count.
    #[arg(long)]
    pub features_per_split: Option<usize>,
    #[arg(long)]
    pub no_bootstrap: bool,
    /// Fit a constant forest when the labels hold a single class.
    #[arg(long)]
    pub allow_constant: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct OracleArgs {
    /// Forest written by `fit-oracle`.
    #[arg(long)]
    pub oracle: Option<PathBuf>,
    /// Shell command speaking the oracle line protocol.
    #[arg(long)]
    pub external_oracle: Option<String>,
}

#[derive(Debug, Args)]
pub struct OracleOpts {
    #[command(flatten)]
    pub source: OracleArgs,
    /// Seconds to wait for one external oracle reply.
    #[arg(long, default_value_t = 60.0)]
    pub oracle_timeout: f64,
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    /// Per-node cap on pseudo samples.
    #[arg(long, default_value_t = 100_000)]
    pub nps: usize,
    #[arg(long, default_value_t = 1000)]
    pub n_initial: usize,
    #[arg(long, default_value_t = 5)]
    pub max_depth: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 4.0)]
    pub growth_cap: f64,
    #[arg(long, default_value_t = 20)]
    pub max_rounds: usize,
    #[arg(long, default_value_t = 5)]
    pub min_node_anchors: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub purity_epsilon: f64,
    #[arg(long, default_value_t = 0.05)]
    pub prune_q: f64,
    /// soft or hard
    #[arg(long, default_value = "soft", value_parser = kebab::<LabelMode>)]
    pub label_mode: LabelMode,
    /// soft-mean or hard-vote
    #[arg(long, default_value = "soft-mean", value_parser = kebab::<LeafRule>)]
    pub leaf_rule: LeafRule,
    /// per-node or root-only
    #[arg(long, default_value = "per-node", value_parser = kebab::<SamplePolicy>)]
    pub sample_policy: SamplePolicy,
    #[arg(long, default_value_t = 1.0)]
    pub bandwidth_factor: f64,
    #[arg(long, default_value_t = 0.1)]
    pub ordinal_jump_prob: f64,
    #[arg(long, default_value_t = 100)]
    pub max_rejection_factor: usize,
}

impl BuildArgs {
    pub fn config(&self) -> BuildConfig {
        BuildConfig {
            alpha: self.alpha,
            n_initial: self.n_initial,
            n_ps_max: self.nps,
            growth_cap: self.growth_cap,
            max_rounds: self.max_rounds,
            max_depth: self.max_depth,
            min_node_anchors: self.min_node_anchors,
            purity_epsilon: self.purity_epsilon,
            prune_q: self.prune_q,
            label_mode: self.label_mode,
            leaf_rule: self.leaf_rule,
            sample_policy: self.sample_policy,
            sampler: SamplerConfig {
                bandwidth_factor: self.bandwidth_factor,
                ordinal_jump_prob: self.ordinal_jump_prob,
                max_rejection_factor: self.max_rejection_factor,
                seed: self.seed,
            },
            seed: self.seed,
        }
    }
}

#[derive(Debug, Args)]
pub struct DistillArgs {
    #[command(flatten)]
    pub oracle: OracleOpts,
    /// Anchor dataset; labels are not needed.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub schema: PathBuf,
    #[command(flatten)]
    pub build: BuildArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub tree: PathBuf,
    #[command(flatten)]
    pub oracle: OracleOpts,
    /// Test rows. If they carry labels, predictive accuracy is reported too.
    #[arg(long)]
    pub data: PathBuf,
    /// Report file (JSON). A text summary goes to stdout.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct StabilityArgs {
    #[command(flatten)]
    pub oracle: OracleOpts,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub schema: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub replicates: usize,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4")]
    pub depths: Vec<usize>,
    /// Threshold tolerance as a fraction of each column's anchor range.
    #[arg(long, conflicts_with = "tolerance_abs")]
    pub tolerance_rel: Option<f64>,
    /// Threshold tolerance in data units, shared by all columns.
    #[arg(long)]
    pub tolerance_abs: Option<f64>,
    #[command(flatten)]
    pub build: BuildArgs,
    /// Report file (JSON).
    #[arg(long)]
    pub out: PathBuf,
    /// Per-replicate structure keys as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Plain-text histogram table.
    #[arg(long)]
    pub text: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ExportFormat {
    Dot,
    Json,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub tree: PathBuf,
    #[arg(long, value_enum)]
    pub format: ExportFormat,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeOracleArgs {
    #[arg(long)]
    pub oracle: PathBuf,
}

/// Parses a kebab-case enum value through its serde names.
fn kebab<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}
