use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use factgrid::eval::CandidatePolicy;
use factgrid::heads::ModelKind;

use crate::config::Widths;

#[derive(Debug, Parser)]
#[command(name = "factgrid", version, about = "Flat, forked and factorized adjective-noun pair classifiers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic two-factor dataset.
    Synth(SynthArgs),
    /// Train a model and write a checkpoint and training log.
    Train(TrainArgs),
    /// Top-k accuracy on seen and unseen pairs.
    Eval(EvalArgs),
    /// Rank examples for one adjective-noun pair.
    Retrieve(RetrieveArgs),
    /// Finite-difference check of every head's gradients.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args, Clone, Default)]
pub struct CommonArgs {
    /// `key = value` config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub adj_count: Option<usize>,
    #[arg(long)]
    pub noun_count: Option<usize>,
    /// Ground-truth latent dimension.
    #[arg(long)]
    pub latent_dim: Option<usize>,
    #[arg(long)]
    pub feature_dim: Option<usize>,
    #[arg(long)]
    pub examples_per_pair: Option<usize>,
    /// Fraction of grid cells held out as unseen.
    #[arg(long)]
    pub holdout_fraction: Option<f64>,
    /// Probability of relabelling an example with another adjective of the same noun.
    #[arg(long)]
    pub label_noise: Option<f64>,
    /// Standard deviation of feature noise.
    #[arg(long)]
    pub noise_scale: Option<f64>,
    #[arg(long)]
    pub uploaders: Option<usize>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Feature file.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// flat, fork or fact.
    #[arg(long)]
    pub model: Option<ModelKind>,
    #[arg(long)]
    pub latent_dim: Option<usize>,
    /// Comma-separated trunk layer widths, e.g. `32,32`.
    #[arg(long)]
    pub trunk_widths: Option<Widths>,
    #[arg(long)]
    pub branch_width: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long, alias = "lr")]
    pub base_lr: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub poly_power: Option<f64>,
    #[arg(long)]
    pub trunk_lr_mult: Option<f64>,
    #[arg(long)]
    pub head_lr_mult: Option<f64>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Seen-pair split to score: test (default) or train.
    #[arg(long)]
    pub split: Option<String>,
    /// Require unseen-pair evaluation (fails for flat models).
    #[arg(long)]
    pub unseen: bool,
    /// Skip unseen-pair evaluation.
    #[arg(long)]
    pub seen_only: bool,
    /// Candidates for unseen evaluation: seen+unseen (default) or unseen.
    #[arg(long)]
    pub policy: Option<CandidatePolicy>,
    /// Second checkpoint; writes per-pair accuracy gap reports.
    #[arg(long)]
    pub compare: Option<PathBuf>,
    /// k used by the gap reports.
    #[arg(long)]
    pub gap_k: Option<usize>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct RetrieveArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub adjective: Option<String>,
    #[arg(long)]
    pub noun: Option<String>,
    #[arg(long)]
    pub top_n: Option<usize>,
    /// Examples to rank: all (default), train, test or unseen.
    #[arg(long)]
    pub split: Option<String>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct GradcheckArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// flat, fork, fact or all.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub latent_dim: Option<usize>,
    /// Number of random models per head.
    #[arg(long)]
    pub seeds: Option<u64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long, hide = true)]
    pub corrupt_backward: bool,
}
