//! Command-line surface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "costroute",
    version,
    about = "Cost-aware query routing over a pool of priced models"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Attach supervision scores and softmax targets to raw execution records
    Score(ScoreArgs),
    /// Train a router on a scored dataset
    Train(TrainArgs),
    /// Route one query with a trained checkpoint
    Route(RouteArgs),
    /// Compare a trained router against baseline policies on labeled records
    Evaluate(EvaluateArgs),
    /// Serve routing decisions over HTTP
    Serve(ServeArgs),
    /// Generate a synthetic labeled dataset for desk-scale experiments
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AllFailMode {
    /// Drop records where every model failed (default)
    Drop,
    /// Keep them with a uniform target
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EmbedderKind {
    /// Character n-gram feature hashing (no external data needed)
    Hashing,
    /// Lookup over a precomputed-embeddings file
    Precomputed,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Raw records, one JSON object per line
    #[arg(long)]
    pub data: PathBuf,
    /// Pool config JSON
    #[arg(long)]
    pub pool: PathBuf,
    /// Output path for the scored dataset
    #[arg(long)]
    pub out: PathBuf,
    /// Softmax temperature over the score vector
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    /// Policy for records where every model failed
    #[arg(long, value_enum, default_value_t = AllFailMode::Drop)]
    pub all_fail: AllFailMode,
    /// Fixed cost scale kappa; per-query mean cost when omitted
    #[arg(long)]
    pub fixed_kappa: Option<f64>,
    /// Expected embedding dimension; inferred from the first record when omitted
    #[arg(long)]
    pub dim: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Scored dataset (output of `costroute score`)
    #[arg(long)]
    pub data: PathBuf,
    /// Pool config JSON
    #[arg(long)]
    pub pool: PathBuf,
    /// Output path for the trained checkpoint
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Output path for the per-step training log CSV
    #[arg(long)]
    pub log: PathBuf,
    /// Compression weight
    #[arg(long, default_value_t = 0.3)]
    pub beta: f64,
    /// Expected-unit-cost weight
    #[arg(long, default_value_t = 0.2)]
    pub lambda: f64,
    #[arg(long, default_value_t = 2e-5)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 2000)]
    pub steps: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    /// Training seed; a logged default is used when omitted
    #[arg(long)]
    pub seed: Option<u64>,
    /// Encoder hidden width; defaults to the embedding dimension
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    /// Bernoulli prior rate of the feature gate
    #[arg(long, default_value_t = 0.5)]
    pub prior_pi: f64,
    /// Relaxation temperature for gate samples
    #[arg(long, default_value_t = 0.5)]
    pub mask_temperature: f64,
    #[arg(long, default_value_t = 0.0)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 0.9)]
    pub adam_beta1: f64,
    #[arg(long, default_value_t = 0.999)]
    pub adam_beta2: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub adam_epsilon: f64,
    /// Use raw USD-per-token unit costs in the cost term instead of
    /// normalizing by the pool's maximum
    #[arg(long)]
    pub raw_cost_term: bool,
    /// Also write a checkpoint snapshot every K steps
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    /// Expected embedding dimension; inferred from the first record when omitted
    #[arg(long)]
    pub dim: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RouteArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub pool: PathBuf,
    /// Query text, embedded with the selected provider
    #[arg(long, conflicts_with = "embedding")]
    pub text: Option<String>,
    /// Precomputed embedding as a JSON array, e.g. '[0.1, -0.2, 0.3]'
    #[arg(long)]
    pub embedding: Option<String>,
    #[arg(long, value_enum, default_value_t = EmbedderKind::Hashing)]
    pub embedder: EmbedderKind,
    /// Embeddings file for the precomputed provider
    #[arg(long)]
    pub embeddings_file: Option<PathBuf>,
    /// L2-normalize precomputed embeddings at load
    #[arg(long)]
    pub normalize_embeddings: bool,
    /// Binarize the feature gate at this rate threshold instead of using
    /// its expected value
    #[arg(long)]
    pub hard_gate_threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub pool: PathBuf,
    /// Labeled records to evaluate on
    #[arg(long)]
    pub data: PathBuf,
    /// Write the per-policy report as CSV
    #[arg(long)]
    pub report_csv: Option<PathBuf>,
    /// Write the aggregated query-model affinity matrix as CSV
    #[arg(long)]
    pub affinity_csv: Option<PathBuf>,
    /// Seed for the random baseline; a logged default is used when omitted
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub pool: PathBuf,
    /// Address to bind, e.g. 127.0.0.1:8787
    #[arg(long, default_value = "127.0.0.1:8787")]
    pub bind: String,
    #[arg(long, value_enum, default_value_t = EmbedderKind::Hashing)]
    pub embedder: EmbedderKind,
    #[arg(long)]
    pub embeddings_file: Option<PathBuf>,
    #[arg(long)]
    pub normalize_embeddings: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Pool config JSON; prices come from here
    #[arg(long)]
    pub pool: PathBuf,
    /// Output path for the generated records
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 5000)]
    pub n: usize,
    /// Generation seed; a logged default is used when omitted
    #[arg(long)]
    pub seed: Option<u64>,
    /// Embedding dimension of the generated queries
    #[arg(long, default_value_t = 16)]
    pub dim: usize,
    /// Additive noise on embedding coordinates
    #[arg(long, default_value_t = 0.05)]
    pub noise_sigma: f64,
    /// Width of the difficulty-encoding bumps
    #[arg(long, default_value_t = 0.12)]
    pub rbf_width: f64,
    /// Scale applied to the normalized embeddings
    #[arg(long, default_value_t = 4.0)]
    pub embedding_gain: f64,
    /// Per-model capability thresholds in pool order, e.g. 0.8,0.4,0.95
    #[arg(long, value_delimiter = ',')]
    pub thresholds: Vec<f64>,
    /// Median prompt tokens per call
    #[arg(long, default_value_t = 1500.0)]
    pub prompt_median: f64,
    /// Median completion tokens per call
    #[arg(long, default_value_t = 300.0)]
    pub completion_median: f64,
    /// Log-space spread of prompt token counts
    #[arg(long, default_value_t = 0.5)]
    pub prompt_ln_sigma: f64,
    /// Log-space spread of completion token counts
    #[arg(long, default_value_t = 0.6)]
    pub completion_ln_sigma: f64,
    /// Use a logistic success model with this difficulty scale instead of a
    /// hard threshold
    #[arg(long)]
    pub logistic_scale: Option<f64>,
}
