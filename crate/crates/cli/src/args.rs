use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(
    name = "ser",
    version,
    about = "Speech emotion recognition experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a seeded synthetic corpus (WAVs and manifest).
    Synth(SynthArgs),
    /// Compute and cache features for every utterance of a manifest.
    Featurize(FeaturizeArgs),
    /// Corpus statistics as JSON and CSV.
    Stats(StatsArgs),
    /// Train one model on a single speaker-independent split.
    Train(TrainArgs),
    /// Evaluate a saved model on a manifest.
    Eval(EvalArgs),
    /// Speaker-independent k-fold cross-validation.
    Crossval(CrossvalArgs),
    /// Train on one corpus, test on another.
    Crosscorpus(CrossCorpusArgs),
    /// Finite-difference gradient check of every layer and a tiny model.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Output root; defaults to $SER_OUTPUT_ROOT, then ./ser-out.
    #[arg(long, env = "SER_OUTPUT_ROOT", default_value = "ser-out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Corpus directory (defaults to <out>/synth).
    #[arg(long)]
    pub dir: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 24)]
    pub speakers: usize,
    #[arg(long, default_value_t = 40)]
    pub per_speaker: usize,
    /// `balanced`, `cemo-like`, `iemocap-like` or `label=share,...`.
    #[arg(long, default_value = "balanced")]
    pub shares: String,
    #[arg(long, default_value_t = 8000)]
    pub sample_rate: u32,
    #[arg(long, default_value_t = 0.8)]
    pub min_duration: f64,
    #[arg(long, default_value_t = 2.6)]
    pub max_duration: f64,
    /// Added to every class centre frequency, in Hz.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub shift_hz: f64,
    #[arg(long, default_value = "")]
    pub id_prefix: String,
}

#[derive(Debug, Args, Clone, Serialize, Deserialize)]
pub struct FeatureArgs {
    #[arg(long, default_value_t = 40)]
    pub n_mels: usize,
    /// Append Δ and ΔΔ₂ features (default).
    #[arg(long, overrides_with = "no_deltas")]
    #[serde(skip)]
    pub deltas: bool,
    #[arg(long)]
    pub no_deltas: bool,
}

impl FeatureArgs {
    pub fn use_deltas(&self) -> bool {
        !self.no_deltas
    }
}

#[derive(Debug, Args)]
pub struct FeaturizeArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Cache directory (defaults to <out>/features).
    #[arg(long)]
    pub cache: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
    #[command(flatten)]
    pub features: FeatureArgs,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[command(flatten)]
    pub output: OutputArgs,
    /// Subdirectory of the output root.
    #[arg(long, default_value = "stats")]
    pub name: String,
}

#[derive(Debug, Args, Clone, Serialize, Deserialize)]
pub struct TaskArgs {
    /// Number of task classes.
    #[arg(long, default_value_t = 4)]
    pub classes: usize,
    /// Named label map (4, iemocap-4, 3-anger, 3-negative, 2-anger, 2-negative, 2-valence).
    #[arg(long)]
    pub preset: Option<String>,
    /// Custom class `task=src1+src2`; repeatable.
    #[arg(long = "map")]
    pub maps: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Temporal,
    #[value(name = "2d")]
    #[serde(rename = "2d")]
    TwoD,
    Compact,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Temporal => "temporal",
            ModelKind::TwoD => "2d",
            ModelKind::Compact => "compact",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeArg {
    Coverage,
    SessionSplit,
}

#[derive(Debug, Args, Clone, Serialize, Deserialize)]
pub struct ExperimentArgs {
    #[command(flatten)]
    pub task: TaskArgs,
    #[command(flatten)]
    pub features: FeatureArgs,
    #[arg(long, value_enum, default_value_t = ModelKind::Temporal)]
    pub model: ModelKind,
    /// Train the gender head alongside emotion (default).
    #[arg(long, overrides_with = "no_multitask")]
    #[serde(skip)]
    pub multitask: bool,
    #[arg(long)]
    pub no_multitask: bool,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.9)]
    pub decay_rate: f64,
    #[arg(long, default_value_t = 1000)]
    pub decay_steps: u64,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, value_enum, default_value_t = SchemeArg::Coverage)]
    pub scheme: SchemeArg,
    /// Keep about this share of training neutral segments.
    #[arg(long)]
    pub neutral_fraction: Option<f64>,
    #[arg(long, default_value = "neutral")]
    pub neutral_label: String,
    /// Sub-segment length in seconds.
    #[arg(long, default_value_t = 3.0)]
    pub window: f64,
    #[arg(long, default_value_t = 1.0)]
    pub overlap: f64,
    /// Run single-threaded.
    #[arg(long)]
    pub sequential: bool,
    /// Name of this run under the output root (defaults to a name built from the options).
    #[arg(long)]
    pub condition: Option<String>,
}

impl ExperimentArgs {
    pub fn multitask(&self) -> bool {
        !self.no_multitask
    }

    pub fn condition(&self) -> String {
        self.condition.clone().unwrap_or_else(|| {
            format!(
                "{}-{}c-{}-{}",
                self.model.name(),
                self.task.classes,
                if self.features.use_deltas() {
                    "deltas"
                } else {
                    "nodeltas"
                },
                if self.multitask() { "mt" } else { "st" }
            )
        })
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Feature cache written by `featurize`; features are computed from audio otherwise.
    #[arg(long)]
    pub cache: Option<PathBuf>,
    /// Which of the k speaker folds supplies the training and validation speakers.
    #[arg(long, default_value_t = 0)]
    pub fold: usize,
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub cache: Option<PathBuf>,
    /// Comma-separated speakers to score; defaults to the test speakers recorded at training
    /// time, or every speaker with `--all`.
    #[arg(long, value_delimiter = ',')]
    pub speakers: Vec<String>,
    #[arg(long, conflicts_with = "speakers")]
    pub all: bool,
    /// Report path (defaults to `eval.json` next to the checkpoint).
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Debug, Args)]
pub struct CrossvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub cache: Option<PathBuf>,
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct CrossCorpusArgs {
    #[arg(long)]
    pub train_manifest: PathBuf,
    #[arg(long)]
    pub train_cache: Option<PathBuf>,
    #[arg(long)]
    pub test_manifest: PathBuf,
    #[arg(long)]
    pub test_cache: Option<PathBuf>,
    /// Share of training-corpus speakers held out for validation.
    #[arg(long, default_value_t = 0.2)]
    pub val_fraction: f64,
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-4)]
    pub threshold: f64,
    /// Double the analytic gradient of this tensor (harness self-test).
    #[arg(long)]
    pub corrupt: Option<String>,
    /// Also write the report to this file.
    #[arg(long)]
    pub report: Option<PathBuf>,
}
