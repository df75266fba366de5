//! Corpus handling: manifests, label mapping, speaker-independent folds, class rebalancing,
//! corpus statistics, inter-annotator agreement and a seeded synthetic corpus generator.

mod balance;
mod folds;
mod kappa;
mod labels;
mod manifest;
mod stats;
mod synth;

use thiserror::Error;

pub use balance::{downsample_neutral, oversample_balance};
pub use folds::{speaker_kfold, FoldScheme, FoldSplit};
pub use kappa::{cohen_kappa, major_label_kappa};
pub use labels::{apply_label_map, LabelMap, Target, PRESETS};
pub use manifest::{load_manifest, parse_manifest, CorpusManifest, Gender, UtteranceRecord};
pub use stats::{corpus_stats, CorpusStats, DurationStats, ShareRow};
pub use synth::{
    generate_synthetic_corpus, parse_shares, synthesize_utterance, ClassAcoustics, SynthConfig,
    SHARE_PRESETS,
};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
    #[error("manifest line {line}: malformed record: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("manifest line {line}: missing field `{field}`")]
    MissingField { line: usize, field: &'static str },
    #[error("manifest line {line}: unknown gender `{value}` (expected M or F)")]
    UnknownGender { line: usize, value: String },
    #[error("manifest line {line}: duplicate id `{id}`")]
    DuplicateId { line: usize, id: String },
    #[error("label `{0}` has no entry in the label map")]
    UnmappedLabel(String),
    #[error("invalid label map: {0}")]
    LabelMap(String),
    #[error("cannot build {k} speaker-independent folds from {speakers} speakers: {reason}")]
    TooFewSpeakers {
        k: usize,
        speakers: usize,
        reason: String,
    },
    #[error("class {0} has no items to balance")]
    EmptyClass(usize),
    #[error("label sequences differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("cannot compute statistics of an empty manifest")]
    EmptyManifest,
    #[error("invalid synthetic corpus configuration: {0}")]
    Synth(String),
    #[error(transparent)]
    Dsp(#[from] crate::dsp::DspError),
}
