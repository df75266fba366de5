use std::collections::BTreeSet;
use std::fmt::Write as _;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{aggregate_segment, select_strategy, ConfusionMatrix, EvalError, Strategy};
use crate::corpus::{
    downsample_neutral, oversample_balance, speaker_kfold, CorpusManifest, FoldScheme,
    UtteranceRecord,
};
use crate::dsp::{featurize, load_wav, FeatureConfig, NormStats};
use crate::exec::{map_indexed, ExecMode};
use crate::net::{sample_seed, ModelSpec, Network, Prediction, SampleRef, Shape2D, Targets};
use crate::segment::{chop, ChopConfig, SegmentLabels, SubSegment};
use crate::trainer::{fit, EpochRecord, OptimizerConfig, TrainError, ValidationScore, Validator};

/// Records mapped onto task classes, with their unnormalized feature matrices.
#[derive(Debug, Clone)]
pub struct LabeledCorpus {
    pub records: Vec<UtteranceRecord>,
    pub features: Vec<Array2<f32>>,
    pub class_names: Vec<String>,
    pub emotions: Vec<usize>,
}

impl LabeledCorpus {
    pub fn new(
        records: Vec<UtteranceRecord>,
        features: Vec<Array2<f32>>,
        class_names: Vec<String>,
    ) -> Result<Self, EvalError> {
        if records.len() != features.len() {
            return Err(EvalError::Data(format!(
                "{} records but {} feature matrices",
                records.len(),
                features.len()
            )));
        }
        if records.is_empty() {
            return Err(EvalError::Data("empty corpus".into()));
        }
        let dims = features[0].ncols();
        let mut emotions = Vec::with_capacity(records.len());
        for (r, f) in records.iter().zip(&features) {
            if f.nrows() == 0 || f.ncols() != dims {
                return Err(EvalError::Data(format!(
                    "{}: feature matrix {:?}",
                    r.id,
                    f.dim()
                )));
            }
            let c = class_names
                .iter()
                .position(|c| c.eq_ignore_ascii_case(&r.emotion))
                .ok_or_else(|| {
                    EvalError::ClassMismatch(format!(
                        "{}: label `{}` not in {class_names:?}",
                        r.id, r.emotion
                    ))
                })?;
            emotions.push(c);
        }
        Ok(Self {
            records,
            features,
            class_names,
            emotions,
        })
    }

    /// Builds the corpus from a label-mapped manifest, obtaining each record's features
    /// through `load`.
    pub fn from_manifest<L>(
        manifest: &CorpusManifest,
        class_names: Vec<String>,
        exec: ExecMode,
        load: L,
    ) -> Result<Self, EvalError>
    where
        L: Fn(&UtteranceRecord) -> Result<Array2<f32>, EvalError> + Sync,
    {
        let features = map_indexed(exec, &manifest.records, |_, r| load(r))
            .into_iter()
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(manifest.records.clone(), features, class_names)
    }

    /// As [`Self::from_manifest`], computing features from each record's audio file.
    pub fn featurize(
        manifest: &CorpusManifest,
        class_names: Vec<String>,
        cfg: &FeatureConfig,
        exec: ExecMode,
    ) -> Result<Self, EvalError> {
        Self::from_manifest(manifest, class_names, exec, |r| {
            Ok(featurize(&load_wav(manifest.audio_path(r))?, cfg)?.values)
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.features[0].ncols()
    }

    pub fn speakers(&self) -> Vec<String> {
        self.records
            .iter()
            .map(|r| r.speaker_id.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn manifest(&self) -> CorpusManifest {
        CorpusManifest::new(self.records.clone())
    }

    /// Indices of the records spoken by any of `speakers`, in corpus order.
    pub fn indices_of(&self, speakers: &[String]) -> Vec<usize> {
        let set: BTreeSet<&str> = speakers.iter().map(String::as_str).collect();
        (0..self.len())
            .filter(|&i| set.contains(self.records[i].speaker_id.as_str()))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub k: usize,
    pub scheme: FoldScheme,
    pub seed: u64,
    pub chop: ChopConfig,
    /// Keep about this fraction of the training folds' neutral segments.
    pub neutral_downsample: Option<f64>,
    pub neutral_label: String,
    /// Share of corpus A's speakers held out for validation in cross-corpus runs.
    pub validation_fraction: f64,
    pub exec: ExecMode,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            k: 5,
            scheme: FoldScheme::default(),
            seed: 0,
            chop: ChopConfig::default(),
            neutral_downsample: None,
            neutral_label: "neutral".into(),
            validation_fraction: 0.2,
            exec: ExecMode::default(),
        }
    }
}

/// A normalized segment cut into model-sized sub-segments.
#[derive(Debug, Clone)]
pub struct PreparedSegment {
    pub index: usize,
    pub emotion: usize,
    pub gender: usize,
    pub subs: Vec<SubSegment>,
}

pub fn prepare_segments(
    corpus: &LabeledCorpus,
    indices: &[usize],
    stats: &NormStats,
    cfg: &ChopConfig,
    exec: ExecMode,
) -> Result<Vec<PreparedSegment>, EvalError> {
    map_indexed(exec, indices, |_, &i| {
        let r = &corpus.records[i];
        let mut f = corpus.features[i].clone();
        stats.apply(&mut f)?;
        let labels = SegmentLabels {
            segment_id: r.id.clone(),
            speaker_id: r.speaker_id.clone(),
            emotion: corpus.emotions[i],
            gender: r.gender,
        };
        Ok(PreparedSegment {
            index: i,
            emotion: corpus.emotions[i],
            gender: r.gender.index(),
            subs: chop(f.view(), &labels, cfg)?,
        })
    })
    .into_iter()
    .collect()
}

/// Anything that maps a sub-segment to class posteriors.
pub trait Classifier: Sync {
    fn predict(&self, sub: &SubSegment) -> Result<Prediction, EvalError>;
}

impl Classifier for Network<f32> {
    fn predict(&self, sub: &SubSegment) -> Result<Prediction, EvalError> {
        let x = sub
            .values
            .as_slice()
            .ok_or_else(|| EvalError::Data("sub-segment is not contiguous".into()))?;
        Ok(Network::predict(self, x, sub.valid_frames)?)
    }
}

/// Segment-level confusion matrices under every aggregation strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentEvaluation {
    pub emotion: Vec<(Strategy, ConfusionMatrix)>,
    pub gender: Option<Vec<(Strategy, ConfusionMatrix)>>,
}

impl SegmentEvaluation {
    pub fn confusion(&self, s: Strategy) -> &ConfusionMatrix {
        &self
            .emotion
            .iter()
            .find(|(k, _)| *k == s)
            .expect("all strategies evaluated")
            .1
    }

    pub fn gender_confusion(&self, s: Strategy) -> Option<&ConfusionMatrix> {
        self.gender.as_ref().map(|g| {
            &g.iter()
                .find(|(k, _)| *k == s)
                .expect("all strategies evaluated")
                .1
        })
    }

    /// Strategy with the best UA; strategies with an undefined recall are excluded.
    pub fn select(&self) -> Option<Strategy> {
        let scores: Vec<(Strategy, Option<f64>)> = self
            .emotion
            .iter()
            .map(|(s, cm)| (*s, cm.ua().ok()))
            .collect();
        select_strategy(&scores)
    }

    /// Validation choice: as [`Self::select`], but when every strategy has an empty class
    /// the mean recall over the classes present is used instead.
    pub fn validation_score(&self) -> Result<ValidationScore, EvalError> {
        let pick = |s: Strategy, ua: f64| -> Result<ValidationScore, EvalError> {
            Ok(ValidationScore {
                ua,
                wa: self.confusion(s).wa()?,
                strategy: s.to_string(),
            })
        };
        if let Some(s) = self.select() {
            return pick(s, self.confusion(s).ua()?);
        }
        let present = |cm: &ConfusionMatrix| {
            let r: Vec<f64> = (0..cm.n_classes())
                .filter(|&i| cm.support(i) > 0)
                .map(|i| cm.counts[i][i] as f64 / cm.support(i) as f64)
                .collect();
            (!r.is_empty()).then(|| r.iter().sum::<f64>() / r.len() as f64)
        };
        let scores: Vec<(Strategy, Option<f64>)> = self
            .emotion
            .iter()
            .map(|(s, cm)| (*s, present(cm)))
            .collect();
        let s = select_strategy(&scores).ok_or(EvalError::NoStrategy)?;
        pick(s, present(self.confusion(s)).expect("selected"))
    }
}

pub fn evaluate_segments(
    classifier: &dyn Classifier,
    segments: &[PreparedSegment],
    class_names: &[String],
    exec: ExecMode,
) -> Result<SegmentEvaluation, EvalError> {
    let flat: Vec<&SubSegment> = segments.iter().flat_map(|s| s.subs.iter()).collect();
    let preds: Vec<Prediction> = map_indexed(exec, &flat, |_, s| classifier.predict(s))
        .into_iter()
        .collect::<Result<_, _>>()?;
    let has_gender = preds.first().is_some_and(|p| p.gender.is_some());
    let gender_names = vec!["M".to_string(), "F".to_string()];
    let mut emotion: Vec<(Strategy, ConfusionMatrix)> = Strategy::ALL
        .iter()
        .map(|s| (*s, ConfusionMatrix::new(class_names.to_vec())))
        .collect();
    let mut gender: Vec<(Strategy, ConfusionMatrix)> = Strategy::ALL
        .iter()
        .map(|s| (*s, ConfusionMatrix::new(gender_names.clone())))
        .collect();
    let mut at = 0;
    for seg in segments {
        let n = seg.subs.len();
        let part = &preds[at..at + n];
        at += n;
        let e: Vec<Vec<f64>> = part.iter().map(|p| p.emotion.clone()).collect();
        for (s, cm) in emotion.iter_mut() {
            cm.record(seg.emotion, aggregate_segment(&e, *s)?.0)?;
        }
        if has_gender {
            let g: Vec<Vec<f64>> = part
                .iter()
                .map(|p| {
                    p.gender
                        .clone()
                        .ok_or_else(|| EvalError::Data("missing gender posterior".into()))
                })
                .collect::<Result<_, _>>()?;
            for (s, cm) in gender.iter_mut() {
                cm.record(seg.gender, aggregate_segment(&g, *s)?.0)?;
            }
        }
    }
    Ok(SegmentEvaluation {
        emotion,
        gender: has_gender.then_some(gender),
    })
}

/// What a [`Learner`] hands back for one training run.
pub struct Learned {
    pub classifier: Box<dyn Classifier + Send>,
    pub log: Vec<EpochRecord>,
    pub network: Option<Network<f32>>,
    pub best_epoch: Option<usize>,
}

pub trait Learner: Sync {
    /// `run` numbers independent trainings (the fold index) and seeds them.
    fn learn(
        &self,
        run: usize,
        input: Shape2D,
        train: &[SampleRef<'_>],
        validator: &dyn Validator,
    ) -> Result<Learned, EvalError>;
}

type EpochHook = Box<dyn Fn(usize, &EpochRecord) + Sync + Send>;

/// Trains a fresh [`Network`] per run with [`fit`].
pub struct NetLearner {
    pub model: ModelSpec,
    pub optimizer: OptimizerConfig,
    pub exec: ExecMode,
    pub on_epoch: Option<EpochHook>,
}

impl NetLearner {
    pub fn new(model: ModelSpec, optimizer: OptimizerConfig, exec: ExecMode) -> Self {
        Self {
            model,
            optimizer,
            exec,
            on_epoch: None,
        }
    }
}

impl Learner for NetLearner {
    fn learn(
        &self,
        run: usize,
        input: Shape2D,
        train: &[SampleRef<'_>],
        validator: &dyn Validator,
    ) -> Result<Learned, EvalError> {
        let seed = sample_seed(self.optimizer.seed, run);
        let net = Network::<f32>::new(self.model.clone(), input, seed)?;
        let cfg = OptimizerConfig {
            seed,
            ..self.optimizer.clone()
        };
        let out = fit(net, train, validator, &cfg, self.exec, |r| {
            if let Some(h) = &self.on_epoch {
                h(run, r);
            }
        })?;
        Ok(Learned {
            classifier: Box::new(out.best.clone()),
            log: out.log,
            network: Some(out.best),
            best_epoch: out.best_epoch,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenderEval {
    pub ua: Option<f64>,
    pub wa: f64,
    pub confusion: ConfusionMatrix,
}

/// Test-set result under the strategy chosen on validation. `ua` and `recalls` are absent
/// when a class has no test segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub class_names: Vec<String>,
    pub strategy: Strategy,
    pub val_ua: f64,
    pub recalls: Option<Vec<f64>>,
    pub ua: Option<f64>,
    pub wa: f64,
    pub confusion: ConfusionMatrix,
    pub gender: Option<GenderEval>,
}

impl EvalReport {
    /// Report for `test` under the strategy chosen on validation.
    pub fn from_evaluation(
        strategy: Strategy,
        val_ua: f64,
        test: &SegmentEvaluation,
    ) -> Result<Self, EvalError> {
        let cm = test.confusion(strategy).clone();
        let gender = match test.gender_confusion(strategy) {
            Some(g) => Some(GenderEval {
                ua: g.ua().ok(),
                wa: g.wa()?,
                confusion: g.clone(),
            }),
            None => None,
        };
        Ok(Self {
            class_names: cm.class_names.clone(),
            strategy,
            val_ua,
            recalls: cm.recall_per_class().ok(),
            ua: cm.ua().ok(),
            wa: cm.wa()?,
            confusion: cm,
            gender,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold_index: usize,
    pub train_speakers: Vec<String>,
    pub val_speakers: Vec<String>,
    pub test_speakers: Vec<String>,
    pub train_segments: usize,
    pub train_subsegments: usize,
    pub best_epoch: Option<usize>,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledReport {
    pub confusion: ConfusionMatrix,
    pub recalls: Option<Vec<f64>>,
    pub ua: Option<f64>,
    pub wa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValReport {
    pub class_names: Vec<String>,
    pub k: usize,
    pub folds: Vec<FoldReport>,
    /// Means over folds with a defined UA.
    pub mean_ua: Option<f64>,
    pub mean_wa: f64,
    pub best_fold: Option<usize>,
    pub best_ua: Option<f64>,
    pub best_wa: Option<f64>,
    pub pooled: PooledReport,
    pub gender_mean_ua: Option<f64>,
    pub gender_pooled_ua: Option<f64>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

impl CrossValReport {
    /// One row per fold, then mean, best and pooled rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("row,strategy,ua,wa,gender_ua\n");
        for f in &self.folds {
            let r = &f.report;
            let _ = writeln!(
                s,
                "fold{},{},{},{:.6},{}",
                f.fold_index,
                r.strategy,
                fmt_opt(r.ua),
                r.wa,
                fmt_opt(r.gender.as_ref().and_then(|g| g.ua))
            );
        }
        let _ = writeln!(
            s,
            "mean,,{},{:.6},{}",
            fmt_opt(self.mean_ua),
            self.mean_wa,
            fmt_opt(self.gender_mean_ua)
        );
        if let Some(b) = self.best_fold {
            let g = self.folds[b].report.gender.as_ref().and_then(|g| g.ua);
            let _ = writeln!(
                s,
                "best,{},{},{},{}",
                self.folds[b].report.strategy,
                fmt_opt(self.best_ua),
                fmt_opt(self.best_wa),
                fmt_opt(g)
            );
        }
        let _ = writeln!(
            s,
            "pooled,,{},{:.6},{}",
            fmt_opt(self.pooled.ua),
            self.pooled.wa,
            fmt_opt(self.gender_pooled_ua)
        );
        s
    }
}

/// Per-run training log, selected network and what is needed to apply it again.
#[derive(Debug, Clone)]
pub struct FoldArtifacts {
    pub fold_index: usize,
    pub log: Vec<EpochRecord>,
    pub network: Option<Network<f32>>,
    pub stats: NormStats,
    pub strategy: Strategy,
    pub val_ua: f64,
}

pub struct CrossValOutcome {
    pub report: CrossValReport,
    pub artifacts: Vec<FoldArtifacts>,
}

struct RunResult {
    report: EvalReport,
    artifacts: FoldArtifacts,
    train_segments: usize,
    train_subsegments: usize,
    best_epoch: Option<usize>,
}

fn validation_adapter<'a>(
    val: &'a [PreparedSegment],
    class_names: &'a [String],
    exec: ExecMode,
) -> impl Fn(&Network<f32>) -> Result<ValidationScore, TrainError> + 'a {
    move |net: &Network<f32>| {
        evaluate_segments(net, val, class_names, exec)
            .and_then(|e| e.validation_score())
            .map_err(|e| TrainError::Validation(e.to_string()))
    }
}

/// A trained model together with everything needed to apply it to new segments.
pub struct SplitRun {
    pub stats: NormStats,
    pub strategy: Strategy,
    pub val_ua: f64,
    pub learned: Learned,
    pub train_segments: usize,
    pub train_subsegments: usize,
}

/// Normalizes on the training segments, chops, oversamples, trains, and picks the
/// aggregation strategy on the validation segments.
pub fn fit_split(
    run: usize,
    corpus: &LabeledCorpus,
    mut train_idx: Vec<usize>,
    val_idx: &[usize],
    cfg: &ProtocolConfig,
    learner: &dyn Learner,
) -> Result<SplitRun, EvalError> {
    let run_seed = sample_seed(cfg.seed, run);
    if let Some(frac) = cfg.neutral_downsample {
        if !(frac > 0.0 && frac <= 1.0) {
            return Err(EvalError::Data(format!(
                "neutral fraction {frac} outside (0, 1]"
            )));
        }
        let recs: Vec<UtteranceRecord> = train_idx
            .iter()
            .map(|&i| corpus.records[i].clone())
            .collect();
        let kept: BTreeSet<String> = downsample_neutral(&recs, &cfg.neutral_label, frac, run_seed)
            .into_iter()
            .map(|r| r.id)
            .collect();
        train_idx.retain(|&i| kept.contains(&corpus.records[i].id));
    }
    if train_idx.is_empty() || val_idx.is_empty() {
        return Err(EvalError::Data(
            "training and validation sets must both be non-empty".into(),
        ));
    }
    let views: Vec<_> = train_idx
        .iter()
        .map(|&i| corpus.features[i].view())
        .collect();
    let stats = NormStats::fit(&views)?;
    let train = prepare_segments(corpus, &train_idx, &stats, &cfg.chop, cfg.exec)?;
    let val = prepare_segments(corpus, val_idx, &stats, &cfg.chop, cfg.exec)?;
    let subs: Vec<&SubSegment> = train.iter().flat_map(|s| s.subs.iter()).collect();
    let labels: Vec<usize> = subs.iter().map(|s| s.labels.emotion).collect();
    let order = oversample_balance(&labels, corpus.class_names.len(), run_seed)?;
    let samples: Vec<SampleRef> = order
        .iter()
        .map(|&i| {
            let s = subs[i];
            SampleRef {
                features: s.values.as_slice().expect("standard layout"),
                valid: s.valid_frames,
                targets: Targets {
                    emotion: s.labels.emotion,
                    gender: Some(s.labels.gender.index()),
                },
            }
        })
        .collect();
    let input = Shape2D::new(cfg.chop.window_frames(), corpus.dims());
    let names = &corpus.class_names;
    let validator = validation_adapter(&val, names, cfg.exec);
    let learned = learner.learn(run, input, &samples, &validator)?;
    let chosen = evaluate_segments(learned.classifier.as_ref(), &val, names, cfg.exec)?
        .validation_score()?;
    Ok(SplitRun {
        stats,
        strategy: Strategy::parse(&chosen.strategy).expect("strategy name round-trips"),
        val_ua: chosen.ua,
        learned,
        train_segments: train_idx.len(),
        train_subsegments: samples.len(),
    })
}

/// Scores `indices` of `corpus` with a fitted classifier, normalization and strategy.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_split(
    classifier: &dyn Classifier,
    corpus: &LabeledCorpus,
    indices: &[usize],
    stats: &NormStats,
    strategy: Strategy,
    val_ua: f64,
    chop_cfg: &ChopConfig,
    exec: ExecMode,
) -> Result<EvalReport, EvalError> {
    let test = prepare_segments(corpus, indices, stats, chop_cfg, exec)?;
    let eval = evaluate_segments(classifier, &test, &corpus.class_names, exec)?;
    EvalReport::from_evaluation(strategy, val_ua, &eval)
}

#[allow(clippy::too_many_arguments)]
fn train_and_test(
    run: usize,
    train_corpus: &LabeledCorpus,
    train_idx: Vec<usize>,
    val_idx: &[usize],
    test_corpus: &LabeledCorpus,
    test_idx: &[usize],
    cfg: &ProtocolConfig,
    learner: &dyn Learner,
) -> Result<RunResult, EvalError> {
    let fitted = fit_split(run, train_corpus, train_idx, val_idx, cfg, learner)?;
    let report = evaluate_split(
        fitted.learned.classifier.as_ref(),
        test_corpus,
        test_idx,
        &fitted.stats,
        fitted.strategy,
        fitted.val_ua,
        &cfg.chop,
        cfg.exec,
    )?;
    Ok(RunResult {
        report,
        best_epoch: fitted.learned.best_epoch,
        artifacts: FoldArtifacts {
            fold_index: run,
            log: fitted.learned.log,
            network: fitted.learned.network,
            stats: fitted.stats,
            strategy: fitted.strategy,
            val_ua: fitted.val_ua,
        },
        train_segments: fitted.train_segments,
        train_subsegments: fitted.train_subsegments,
    })
}

/// Speaker-independent k-fold cross-validation. Folds run in index order.
pub fn crossval(
    corpus: &LabeledCorpus,
    cfg: &ProtocolConfig,
    learner: &dyn Learner,
) -> Result<CrossValOutcome, EvalError> {
    let folds = speaker_kfold(&corpus.manifest(), cfg.k, cfg.seed, cfg.scheme)?;
    let mut reports = Vec::with_capacity(folds.len());
    let mut artifacts = Vec::with_capacity(folds.len());
    for split in &folds {
        let f = split.fold_index;
        let wrap = |e: EvalError| EvalError::Fold {
            fold: f,
            source: Box::new(e),
        };
        let train_idx = corpus.indices_of(&split.train_speakers);
        let val_idx = corpus.indices_of(&split.val_speakers);
        let test_idx = corpus.indices_of(&split.test_speakers);
        let seen: BTreeSet<&str> = train_idx
            .iter()
            .chain(&val_idx)
            .map(|&i| corpus.records[i].speaker_id.as_str())
            .collect();
        if let Some(&i) = test_idx
            .iter()
            .find(|&&i| seen.contains(corpus.records[i].speaker_id.as_str()))
        {
            return Err(EvalError::SpeakerLeak {
                fold: f,
                speaker: corpus.records[i].speaker_id.clone(),
            });
        }
        let r = train_and_test(
            f, corpus, train_idx, &val_idx, corpus, &test_idx, cfg, learner,
        )
        .map_err(wrap)?;
        reports.push(FoldReport {
            fold_index: f,
            train_speakers: split.train_speakers.clone(),
            val_speakers: split.val_speakers.clone(),
            test_speakers: split.test_speakers.clone(),
            train_segments: r.train_segments,
            train_subsegments: r.train_subsegments,
            best_epoch: r.best_epoch,
            report: r.report,
        });
        artifacts.push(r.artifacts);
    }
    Ok(CrossValOutcome {
        report: summarize(corpus.class_names.clone(), cfg.k, reports)?,
        artifacts,
    })
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn summarize(
    class_names: Vec<String>,
    k: usize,
    folds: Vec<FoldReport>,
) -> Result<CrossValReport, EvalError> {
    let mut pooled = ConfusionMatrix::new(class_names.clone());
    let mut gender_pooled: Option<ConfusionMatrix> = None;
    for f in &folds {
        pooled.merge(&f.report.confusion)?;
        if let Some(g) = &f.report.gender {
            match &mut gender_pooled {
                Some(p) => p.merge(&g.confusion)?,
                None => gender_pooled = Some(g.confusion.clone()),
            }
        }
    }
    let uas: Vec<f64> = folds.iter().filter_map(|f| f.report.ua).collect();
    let was: Vec<f64> = folds.iter().map(|f| f.report.wa).collect();
    let best_fold = folds
        .iter()
        .enumerate()
        .filter_map(|(i, f)| f.report.ua.map(|u| (i, u)))
        .fold(None, |b: Option<(usize, f64)>, (i, u)| {
            if b.is_none_or(|(_, bu)| u > bu) {
                Some((i, u))
            } else {
                b
            }
        })
        .map(|(i, _)| i);
    let gender_uas: Vec<f64> = folds
        .iter()
        .filter_map(|f| f.report.gender.as_ref().and_then(|g| g.ua))
        .collect();
    Ok(CrossValReport {
        k,
        mean_ua: mean(&uas),
        mean_wa: mean(&was).unwrap_or(0.0),
        best_ua: best_fold.and_then(|b| folds[b].report.ua),
        best_wa: best_fold.map(|b| folds[b].report.wa),
        best_fold,
        pooled: PooledReport {
            recalls: pooled.recall_per_class().ok(),
            ua: pooled.ua().ok(),
            wa: pooled.wa()?,
            confusion: pooled,
        },
        gender_mean_ua: mean(&gender_uas),
        gender_pooled_ua: gender_pooled.and_then(|g| g.ua().ok()),
        class_names,
        folds,
    })
}

pub struct CrossCorpusOutcome {
    pub report: EvalReport,
    pub train_speakers: Vec<String>,
    pub val_speakers: Vec<String>,
    pub artifacts: FoldArtifacts,
}

/// Trains on corpus A (a seeded share of its speakers held out for validation) and tests
/// on all of corpus B.
pub fn cross_corpus(
    train: &LabeledCorpus,
    test: &LabeledCorpus,
    cfg: &ProtocolConfig,
    learner: &dyn Learner,
) -> Result<CrossCorpusOutcome, EvalError> {
    if train.class_names != test.class_names {
        return Err(EvalError::ClassMismatch(format!(
            "{:?} vs {:?}",
            train.class_names, test.class_names
        )));
    }
    let ids: BTreeSet<&str> = train.records.iter().map(|r| r.id.as_str()).collect();
    if test.records.iter().any(|r| ids.contains(r.id.as_str())) {
        return Err(EvalError::CrossCorpus(
            "corpora share segment ids; they must differ".into(),
        ));
    }
    let a_speakers = train.speakers();
    if let Some(s) = test
        .speakers()
        .into_iter()
        .find(|s| a_speakers.binary_search(s).is_ok())
    {
        return Err(EvalError::CrossCorpus(format!(
            "speaker {s} appears in both corpora"
        )));
    }
    if a_speakers.len() < 2 {
        return Err(EvalError::CrossCorpus(
            "corpus A needs at least two speakers".into(),
        ));
    }
    if !(cfg.validation_fraction > 0.0 && cfg.validation_fraction < 1.0) {
        return Err(EvalError::Data(format!(
            "validation fraction {} outside (0, 1)",
            cfg.validation_fraction
        )));
    }
    let mut shuffled = a_speakers;
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let n_val = ((shuffled.len() as f64 * cfg.validation_fraction).round() as usize)
        .clamp(1, shuffled.len() - 1);
    let mut val_speakers = shuffled[..n_val].to_vec();
    let mut train_speakers = shuffled[n_val..].to_vec();
    val_speakers.sort();
    train_speakers.sort();
    let test_idx: Vec<usize> = (0..test.len()).collect();
    let r = train_and_test(
        0,
        train,
        train.indices_of(&train_speakers),
        &train.indices_of(&val_speakers),
        test,
        &test_idx,
        cfg,
        learner,
    )?;
    Ok(CrossCorpusOutcome {
        report: r.report,
        train_speakers,
        val_speakers,
        artifacts: r.artifacts,
    })
}
