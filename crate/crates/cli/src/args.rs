use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// Rerank answer sentences with transport alignments and a context graph.
///
/// Log verbosity comes from OTRANK_LOG (error, warn, info, debug; default info).
#[derive(Debug, Parser)]
#[command(name = "otrank", version)]
pub struct Cli {
    /// Run batch work on a single thread [default: false]
    #[arg(long, global = true)]
    pub sequential: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Count, per word, the training questions it occurs in
    BuildFreq(BuildFreqArgs),
    /// Train a reranker; writes model.ckpt, model.best.ckpt and train_log.jsonl
    Train(TrainArgs),
    /// Score and rank every candidate of a split (JSONL, one question per line)
    Rerank(RerankArgs),
    /// Compute P@1, MAP and MRR on one split (or several, combined)
    Eval(EvalArgs),
    /// Inspect the alignments and edge weights of one candidate window
    Align(AlignArgs),
    /// Compare analytic and finite-difference gradients on a micro-model
    Gradcheck(GradcheckArgs),
    /// Write a synthetic train/dev corpus, embedding store and config
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct BuildFreqArgs {
    /// Training split (JSONL)
    #[arg(long)]
    pub train: PathBuf,
    /// Output frequency table (JSON)
    #[arg(long)]
    pub out: PathBuf,
}

/// Flags override the config file, which overrides the built-in defaults.
#[derive(Debug, Args)]
pub struct TrainArgs {
    /// JSON config: training settings plus "train", "dev", "embeddings" and
    /// "output_dir" paths (relative to the config file) [default: none]
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Training split (JSONL) [default: from config]
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Dev split for per-epoch evaluation and best-checkpoint selection [default: from config, else none]
    #[arg(long)]
    pub dev: Option<PathBuf>,
    /// Embedding store [default: from config]
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Directory for the checkpoints and log [default: from config]
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Seed for initialization and shuffling [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Passes over the training windows [default: 20]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Adam learning rate [default: 1e-5]
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Candidate windows per batch [default: 64]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Weight of the mutual-information term [default: 0.3]
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Hidden width of the feed-forward networks [default: 400]
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Number of graph convolution layers [default: 2]
    #[arg(long)]
    pub gcn_layers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RerankArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Split to rank (JSONL)
    #[arg(long)]
    pub split: PathBuf,
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Output rankings (JSONL)
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Split to evaluate (JSONL); repeat with --combine-dev-test to pool splits
    #[arg(long, required = true)]
    pub split: Vec<PathBuf>,
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Report one set of metrics over all given splits [default: false]
    #[arg(long)]
    pub combine_dev_test: bool,
    /// Write the report here instead of stdout [default: stdout]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write per-question metrics as TSV [default: none]
    #[arg(long)]
    pub per_question: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AlignArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Split containing the question (JSONL)
    #[arg(long)]
    pub split: PathBuf,
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub question_id: String,
    #[arg(long)]
    pub window_id: String,
    /// Write the report here instead of stdout [default: stdout]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the report here instead of stdout [default: stdout]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Directory to create the files in
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 200)]
    pub train_questions: usize,
    #[arg(long, default_value_t = 50)]
    pub dev_questions: usize,
    /// Candidate windows per question
    #[arg(long, default_value_t = 5)]
    pub candidates: usize,
    /// Embedding width
    #[arg(long, default_value_t = 16)]
    pub dim: usize,
}
