use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use concept_lens::eval::bootstrap::{DEFAULT_ALPHA, DEFAULT_RESAMPLES};
use concept_lens::eval::spec::TaskKind;
use concept_lens::eval::zeroshot::DEFAULT_TEMPLATE;
use concept_lens::eval::{Direction, MetricName};
use concept_lens::solver::{ResidualScale, SolverConfig};
use concept_lens::store::Split;
use concept_lens::vocab::Construction;

#[derive(Debug, Parser)]
#[command(
    name = "concept-lens",
    version,
    about = "Sparse concept decompositions of audio-text embeddings and their zero-shot evaluation"
)]
pub struct Cli {
    /// Worker threads for parallel stages; defaults to the available cores.
    #[arg(long, global = true, env = "CONCEPT_LENS_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a planted sparse-code fixture (vocabulary, audio, prompts, manifest, truth).
    Synth(SynthArgs),
    /// Build a concept vocabulary from tag frequencies or by clustering a pool.
    BuildVocab(BuildVocabArgs),
    /// Propose synonym groups from a tag table for manual review.
    ProposeGroups(ProposeGroupsArgs),
    /// Decompose embeddings into sparse concept codes.
    Decompose(DecomposeArgs),
    /// Zero-shot classification with dense embeddings or concept reconstructions.
    Classify(EvalArgs),
    /// Zero-shot retrieval with dense embeddings or concept reconstructions.
    Retrieve(EvalArgs),
    /// Tabulate sparsity, reconstruction and task metric over a lambda grid.
    Sweep(SweepArgs),
    /// Train a linear projection on the dev split, then evaluate projected concept codes.
    Finetune(FinetuneArgs),
    /// Render sweep CSVs as SVG line charts.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScaleArg {
    /// 1/2 ||Cw - z||^2
    Unit,
    /// 1/(2d) ||Cw - z||^2
    Dimension,
}

impl From<ScaleArg> for ResidualScale {
    fn from(s: ScaleArg) -> Self {
        match s {
            ScaleArg::Unit => ResidualScale::Unit,
            ScaleArg::Dimension => ResidualScale::Dimension,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Classification,
    Retrieval,
}

impl From<TaskArg> for TaskKind {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Classification => TaskKind::Classification,
            TaskArg::Retrieval => TaskKind::Retrieval,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    /// Sparsity penalty.
    #[arg(long, default_value_t = SolverConfig::default().lambda)]
    pub lambda: f64,
    /// Divisor of the squared residual.
    #[arg(long, value_enum, default_value_t = ScaleArg::Unit)]
    pub scale: ScaleArg,
    /// Coordinate-descent sweep cap.
    #[arg(long, default_value_t = SolverConfig::default().max_sweeps)]
    pub max_sweeps: usize,
    /// Stop once no coordinate moves by more than this in a sweep.
    #[arg(long, default_value_t = SolverConfig::default().tolerance)]
    pub tolerance: f64,
}

impl SolverArgs {
    pub fn config(&self) -> SolverConfig {
        SolverConfig {
            lambda: self.lambda,
            max_sweeps: self.max_sweeps,
            tolerance: self.tolerance,
            epsilon_target: None,
            scale: self.scale.into(),
        }
    }
}

/// Where the evaluation data lives. Either `--task-spec` or the individual
/// flags; individual flags override fields of the spec.
#[derive(Debug, Clone, Args)]
pub struct TaskArgs {
    /// JSON task description (task, manifest, embeddings, text_embeddings, ...).
    #[arg(long)]
    pub task_spec: Option<PathBuf>,
    /// Dataset manifest (JSON lines: id, split, labels, captions).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Audio embedding store.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Text embedding store holding prompts (classification) or captions (retrieval).
    #[arg(long, alias = "prompts")]
    pub text_embeddings: Option<PathBuf>,
    /// Prompt template containing "[class label]".
    #[arg(long)]
    pub template: Option<String>,
    /// Task metric (accuracy, macro_f1, micro_f1, map, recall_at_1, map_at_10).
    #[arg(long)]
    pub metric: Option<MetricName>,
    /// Restrict to one split (dev, eval, fold-K).
    #[arg(long)]
    pub split: Option<Split>,
    /// Comma-separated class order for the prompt bank.
    #[arg(long, value_delimiter = ',')]
    pub labels: Option<Vec<String>>,
    /// Retrieval direction (audio_text or text_audio).
    #[arg(long)]
    pub direction: Option<Direction>,
}

#[derive(Debug, Clone, Args)]
pub struct BootstrapArgs {
    /// Bootstrap resamples for the confidence interval; 0 disables it.
    #[arg(long, default_value_t = DEFAULT_RESAMPLES)]
    pub n_bootstrap: usize,
    /// Two-sided interval level is 1 - alpha.
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    /// Seed for bootstrap resampling.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Embedding dimension.
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    /// Vocabulary size.
    #[arg(long, default_value_t = 128)]
    pub concepts: usize,
    /// Number of audio embeddings.
    #[arg(long, default_value_t = 200)]
    pub samples: usize,
    /// Planted concepts per sample.
    #[arg(long, default_value_t = 5)]
    pub sparsity: usize,
    /// Total noise standard deviation before normalization.
    #[arg(long, default_value_t = 0.01)]
    pub noise: f64,
    /// Split the vocabulary into this many disjoint class blocks.
    #[arg(long)]
    pub classes: Option<usize>,
    /// Prompt template used to key the prompt store and captions.
    #[arg(long, default_value = DEFAULT_TEMPLATE)]
    pub template: String,
}

#[derive(Debug, Clone, Args)]
pub struct BuildVocabArgs {
    /// Construction method.
    #[arg(long)]
    pub construction: Construction,
    /// Tag frequency CSV (tag,count); required for baseline and pruned.
    #[arg(long)]
    pub tags: Option<PathBuf>,
    /// Text embedding store keyed by tag; supplies the concept embeddings.
    #[arg(long)]
    pub pool: PathBuf,
    /// Number of concepts.
    #[arg(long)]
    pub vocab_size: usize,
    /// Tags to drop, one per line (baseline).
    #[arg(long)]
    pub blocklist: Option<PathBuf>,
    /// Accepted words, one per line.
    #[arg(long)]
    pub wordlist: Option<PathBuf>,
    /// Synonym groups, one comma-separated group per line (pruned).
    #[arg(long)]
    pub groups: Option<PathBuf>,
    /// Most frequent tags considered before filtering (pruned, clustered).
    #[arg(long)]
    pub pool_size: Option<usize>,
    /// k-means seed (clustered).
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// k-means iteration cap (clustered).
    #[arg(long, default_value_t = 300)]
    pub max_iters: usize,
    /// Vocabulary id; defaults to "<construction>-<size>".
    #[arg(long)]
    pub id: Option<String>,
    /// Output vocabulary directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ProposeGroupsArgs {
    /// Tag frequency CSV (tag,count).
    #[arg(long)]
    pub tags: PathBuf,
    /// Output groups file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct DecomposeArgs {
    /// Concept vocabulary directory.
    #[arg(long)]
    pub vocab: PathBuf,
    /// Embedding store to decompose.
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Manifest whose labels drive per-class concept profiles.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Concepts listed per embedding in the report.
    #[arg(long, default_value_t = 10)]
    pub top_k: usize,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub task: TaskArgs,
    /// Concept vocabulary; evaluates dense embeddings when absent.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub bootstrap: BootstrapArgs,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub task: TaskArgs,
    /// Task kind when no spec is given.
    #[arg(long, value_enum)]
    pub task_kind: Option<TaskArg>,
    /// Concept vocabulary directory; repeat for several series.
    #[arg(long, required = true)]
    pub vocab: Vec<PathBuf>,
    /// Comma-separated penalties.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "0.01,0.03,0.05,0.1,0.15,0.25,0.35,0.5"
    )]
    pub lambda_grid: Vec<f64>,
    #[arg(long, value_enum, default_value_t = ScaleArg::Unit)]
    pub scale: ScaleArg,
    #[arg(long, default_value_t = SolverConfig::default().max_sweeps)]
    pub max_sweeps: usize,
    #[arg(long, default_value_t = SolverConfig::default().tolerance)]
    pub tolerance: f64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct FinetuneArgs {
    #[command(flatten)]
    pub task: TaskArgs,
    /// Concept vocabulary directory.
    #[arg(long)]
    pub vocab: PathBuf,
    /// Split the projection is trained on.
    #[arg(long, default_value = "dev")]
    pub train_split: Split,
    /// Split the projected concept codes are evaluated on.
    #[arg(long, default_value = "eval")]
    pub eval_split: Split,
    #[arg(long, default_value_t = 0.5)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    /// Epochs without improvement before stopping; 0 never stops early.
    #[arg(long, default_value_t = 10)]
    pub patience: usize,
    /// Half-width of the uniform initialization.
    #[arg(long, default_value_t = 0.01)]
    pub init_scale: f64,
    /// Start from the identity instead of a random matrix.
    #[arg(long)]
    pub identity_init: bool,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Seed for initialization, batch order and bootstrap.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_RESAMPLES)]
    pub n_bootstrap: usize,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// Sweep CSV written by `sweep`.
    #[arg(long)]
    pub input: PathBuf,
    /// Chart title prefix.
    #[arg(long, default_value = "")]
    pub title: String,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}
