//! Segment-level aggregation, UA/WA metrics, speaker-independent cross-validation and
//! cross-corpus evaluation.

mod aggregate;
mod crossval;
mod metrics;
pub mod stubs;

use thiserror::Error;

use crate::corpus::CorpusError;
use crate::dsp::DspError;
use crate::net::NetError;
use crate::segment::SegmentError;
use crate::trainer::TrainError;

pub use aggregate::{aggregate_segment, argmax, select_strategy, Strategy};
pub use crossval::{
    cross_corpus, crossval, evaluate_segments, evaluate_split, fit_split, prepare_segments,
    Classifier, CrossCorpusOutcome, CrossValOutcome, CrossValReport, EvalReport, FoldArtifacts,
    FoldReport, GenderEval, LabeledCorpus, Learned, Learner, NetLearner, PooledReport,
    PreparedSegment, ProtocolConfig, SegmentEvaluation, SplitRun,
};
pub use metrics::ConfusionMatrix;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("recall undefined: class `{0}` has no test samples")]
    UndefinedRecall(String),
    #[error("empty confusion matrix")]
    EmptyMatrix,
    #[error("segment has no sub-segment predictions")]
    EmptySegment,
    #[error("class index {index} out of range for {n} classes")]
    ClassIndex { index: usize, n: usize },
    #[error("class sets differ: {0}")]
    ClassMismatch(String),
    #[error("fold {fold}: speaker {speaker} appears in both test and training/validation")]
    SpeakerLeak { fold: usize, speaker: String },
    #[error("cross-corpus: {0}")]
    CrossCorpus(String),
    #[error("no aggregation strategy has a defined validation UA")]
    NoStrategy,
    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<EvalError>,
    },
    #[error("{0}")]
    Data(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Segment(#[from] SegmentError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

impl EvalError {
    /// True for failures caused by numbers rather than inputs (divergence, NaN).
    pub fn is_numerical(&self) -> bool {
        match self {
            EvalError::Fold { source, .. } => source.is_numerical(),
            EvalError::Net(NetError::NonFinite(_)) => true,
            EvalError::Train(t) => matches!(
                t,
                TrainError::Divergence { .. }
                    | TrainError::NonFiniteGradient { .. }
                    | TrainError::NonFiniteUpdate { .. }
                    | TrainError::Net(NetError::NonFinite(_))
            ),
            _ => false,
        }
    }
}
