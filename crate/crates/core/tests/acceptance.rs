//! End-to-end acceptance checks. Runs without the libtest harness so every criterion prints
//! one `PASS`/`FAIL` line and the long synthetic experiments run one at a time (their
//! runtimes are part of what is checked). Optional arguments select criteria by substring.

use std::cell::OnceCell;
use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ser_core::corpus::{
    downsample_neutral, generate_synthetic_corpus, oversample_balance, speaker_kfold,
    CorpusManifest, FoldScheme, Gender, SynthConfig, UtteranceRecord,
};
use ser_core::dsp::FeatureConfig;
use ser_core::evaluator::{
    cross_corpus, crossval, ConfusionMatrix, CrossValOutcome, LabeledCorpus, NetLearner,
    ProtocolConfig,
};
use ser_core::exec::ExecMode;
use ser_core::net::{
    conv_forward, encode_checkpoint, mask_size, multitask_total, Activation, ConvSpec, ModelSpec,
    Network, SampleRef, Shape2D, Targets,
};
use ser_core::segment::{chop, ChopConfig, SegmentLabels};
use ser_core::trainer::{
    gradcheck, gradcheck_layers, lr_at_step, tiny_model_spec, GradcheckOptions, OptimizerConfig,
};

type Outcome = Result<String, String>;

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

const CLASSES: [&str; 4] = ["anger", "fear", "positive", "neutral"];
const EPOCHS: usize = 30;

fn class_names() -> Vec<String> {
    CLASSES.iter().map(|s| s.to_string()).collect()
}

struct Run {
    outcome: CrossValOutcome,
    elapsed: Duration,
}

/// Corpora and experiment runs shared between criteria.
struct Lab {
    dir: tempfile::TempDir,
    corpus_a: OnceCell<LabeledCorpus>,
    corpus_b: OnceCell<LabeledCorpus>,
    main: OnceCell<Run>,
}

impl Lab {
    fn new() -> Self {
        Self {
            dir: tempfile::tempdir().expect("tempdir"),
            corpus_a: OnceCell::new(),
            corpus_b: OnceCell::new(),
            main: OnceCell::new(),
        }
    }

    fn synth(&self, cfg: &SynthConfig, name: &str) -> LabeledCorpus {
        let m = generate_synthetic_corpus(cfg, &self.dir.path().join(name)).expect("synth");
        LabeledCorpus::featurize(
            &m,
            class_names(),
            &FeatureConfig::default(),
            ExecMode::default(),
        )
        .expect("featurize")
    }

    fn a(&self) -> &LabeledCorpus {
        self.corpus_a
            .get_or_init(|| self.synth(&SynthConfig::default(), "a"))
    }

    /// Same design as A, other speakers, every class centre shifted up by 350 Hz.
    fn b(&self) -> &LabeledCorpus {
        self.corpus_b.get_or_init(|| {
            let cfg = SynthConfig {
                seed: 8,
                acoustic_shift_hz: 350.0,
                id_prefix: "b".into(),
                ..SynthConfig::default()
            };
            self.synth(&cfg, "b")
        })
    }

    fn main(&self) -> &Run {
        self.main.get_or_init(|| run_crossval(self.a()))
    }
}

fn learner() -> NetLearner {
    let opt = OptimizerConfig {
        lr0: 1e-4,
        batch_size: 32,
        max_epochs: EPOCHS,
        ..OptimizerConfig::default()
    };
    NetLearner::new(
        ModelSpec::preset("temporal", 4, true).expect("preset"),
        opt,
        ExecMode::default(),
    )
}

fn run_crossval(corpus: &LabeledCorpus) -> Run {
    let t = Instant::now();
    let outcome = crossval(corpus, &ProtocolConfig::default(), &learner()).expect("crossval");
    Run {
        outcome,
        elapsed: t.elapsed(),
    }
}

fn fmt_ua(x: Option<f64>) -> String {
    x.map_or("undefined".into(), |v| format!("{v:.4}"))
}

// 1
fn gradient_integrity(_: &Lab) -> Outcome {
    let t = Instant::now();
    let opts = GradcheckOptions::default();
    let run = || -> Result<_, ser_core::trainer::TrainError> {
        let layers = gradcheck_layers(0, &opts)?;
        let model = gradcheck(&tiny_model_spec(true), 0, &opts)?.merge(gradcheck(
            &tiny_model_spec(false),
            1,
            &opts,
        )?);
        Ok((layers, model))
    };
    let (layers, model) = run().map_err(|e| e.to_string())?;
    let elapsed = t.elapsed();
    let names: BTreeSet<&str> = layers.entries.iter().map(|e| e.layer.as_str()).collect();
    let needed = [
        "temporal_conv",
        "conv2d",
        "max_pool",
        "bilstm",
        "dense",
        "relu",
        "softmax_cross_entropy",
    ];
    let covered = needed.iter().all(|l| names.contains(l)) && !model.entries.is_empty();
    let report = layers.merge(model);
    verdict(
        covered && report.max_rel_err <= 1e-4 && elapsed <= Duration::from_secs(120),
        format!(
            "max rel err {:.2e} over {} tensors, {:.1}s",
            report.max_rel_err,
            report.entries.len(),
            elapsed.as_secs_f64()
        ),
    )
}

// 2
fn metric_oracle(_: &Lab) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    let mut balanced_worst = 0.0f64;
    for trial in 0..1000 {
        let e = rng.random_range(2..=6);
        let names: Vec<String> = (0..e).map(|c| format!("c{c}")).collect();
        let balanced = trial % 4 == 0;
        let mut pairs: Vec<(usize, usize)> = Vec::new();
        if balanced {
            let per = rng.random_range(1..30);
            for t in 0..e {
                for _ in 0..per {
                    pairs.push((t, rng.random_range(0..e)));
                }
            }
        } else {
            for t in 0..e {
                pairs.push((t, rng.random_range(0..e)));
            }
            for _ in 0..rng.random_range(0..200) {
                pairs.push((rng.random_range(0..e), rng.random_range(0..e)));
            }
        }
        pairs.shuffle(&mut rng);
        let cm = ConfusionMatrix::from_pairs(names, &pairs).map_err(|x| x.to_string())?;

        let recall: Vec<f64> = (0..e)
            .map(|c| {
                let of_c: Vec<_> = pairs.iter().filter(|p| p.0 == c).collect();
                of_c.iter().filter(|p| p.1 == c).count() as f64 / of_c.len() as f64
            })
            .collect();
        let ua = recall.iter().sum::<f64>() / e as f64;
        let correct = pairs.iter().filter(|p| p.0 == p.1).count();
        let wa = correct as f64 / pairs.len() as f64;

        let got_recall = cm.recall_per_class().map_err(|x| x.to_string())?;
        let (got_ua, got_wa) = (cm.ua().unwrap(), cm.wa().unwrap());
        for (a, b) in got_recall.iter().zip(&recall) {
            worst = worst.max((a - b).abs());
        }
        worst = worst.max((got_ua - ua).abs()).max((got_wa - wa).abs());
        if got_wa != cm.trace() as f64 / cm.total() as f64 || cm.trace() as usize != correct {
            return Err(format!("trial {trial}: WA is not trace / N"));
        }
        if balanced {
            balanced_worst = balanced_worst.max((got_ua - got_wa).abs());
        }
    }
    verdict(
        worst <= 1e-12 && balanced_worst <= 1e-12,
        format!("1000 matrices, max |diff| {worst:.1e}, balanced |UA − WA| {balanced_worst:.1e}"),
    )
}

// 3
fn mask_formula(_: &Lab) -> Outcome {
    fn oracle(n: usize, k: usize, s: usize, p: usize) -> usize {
        (n + 2 * p - k) / s + 1
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut checked = 0;
    for trial in 0..200 {
        let temporal = trial % 2 == 0;
        let mut shape = Shape2D::new(rng.random_range(8..80), rng.random_range(4..30));
        let mut channels = rng.random_range(1..3);
        let mut input = Activation::<f32>::zeros(shape.height, shape.width, channels);
        let mut valid = shape.height;
        for _ in 0..rng.random_range(1..=3) {
            let p = rng.random_range(0..3);
            let kh = rng.random_range(1..=(shape.height + 2 * p).min(7));
            let sh = rng.random_range(1..4);
            let co = rng.random_range(1..4);
            let (spec, expected) = if temporal {
                let spec = ConvSpec::temporal(kh, sh, p, co);
                (spec, Shape2D::new(oracle(shape.height, kh, sh, p), 1))
            } else {
                let kmax = (shape.height.min(shape.width) + 2 * p).min(7);
                let k = rng.random_range(1..=kmax);
                let s = rng.random_range(1..4);
                let spec = ConvSpec::two_d(k, s, p, co);
                let e = Shape2D::new(oracle(shape.height, k, s, p), oracle(shape.width, k, s, p));
                (spec, e)
            };
            let predicted = mask_size(shape, &spec).map_err(|e| e.to_string())?;
            let rc = spec.resolve(shape, channels).map_err(|e| e.to_string())?;
            let w = vec![0.0f32; rc.weight_len()];
            let b = vec![0.0f32; co];
            let (out, v) = conv_forward(&input, valid, &rc, &w, &b).map_err(|e| e.to_string())?;
            if predicted != expected || out.shape() != expected || out.channels != co {
                return Err(format!(
                    "{spec:?} on {shape:?}: predicted {predicted:?}, executed {:?}, oracle {expected:?}",
                    out.shape()
                ));
            }
            checked += 1;
            (shape, channels, input, valid) = (out.shape(), co, out, v);
        }
    }
    verdict(
        true,
        format!("200 random stacks, {checked} convolutions, temporal and 2d"),
    )
}

// 4
fn padding_invisibility(_: &Lab) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut cases = 0;
    let models: [(&str, ModelSpec, Shape2D); 4] = [
        (
            "temporal",
            ModelSpec::temporal_default(4, true),
            Shape2D::new(300, 120),
        ),
        (
            "2d",
            ModelSpec::conv2d_default(4, true),
            Shape2D::new(300, 40),
        ),
        (
            "compact",
            ModelSpec::temporal_compact(4, false),
            Shape2D::new(300, 40),
        ),
        ("tiny", tiny_model_spec(true), Shape2D::new(12, 9)),
    ];
    for (name, spec, shape) in models {
        let n_classes = spec.emotion_classes;
        let net = Network::<f32>::new(spec, shape, 17).map_err(|e| e.to_string())?;
        let row = shape.width;
        for trial in 0..4 {
            let valid = rng.random_range(1..shape.height);
            let x: Vec<f32> = (0..shape.height * row)
                .map(|i| {
                    if i < valid * row {
                        rng.random_range(-2.0..2.0)
                    } else {
                        0.0
                    }
                })
                .collect();
            let mut y = x.clone();
            for v in &mut y[valid * row..] {
                *v = match trial {
                    0 => rng.random_range(-1e3..1e3),
                    1 => f32::NAN,
                    2 => f32::INFINITY,
                    _ => 1.0,
                };
            }
            let targets = Targets {
                emotion: rng.random_range(0..n_classes),
                gender: net.spec.multitask.then(|| rng.random_range(0..2)),
            };
            fn sample(features: &[f32], valid: usize, targets: Targets) -> SampleRef<'_> {
                SampleRef {
                    features,
                    valid,
                    targets,
                }
            }
            let batch_x = [sample(&x, valid, targets), sample(&x, valid, targets)];
            let batch_y = [sample(&x, valid, targets), sample(&y, valid, targets)];
            let a = net.batch_gradients(&batch_x, Some(trial), ExecMode::Sequential);
            let b = net.batch_gradients(&batch_y, Some(trial), ExecMode::Sequential);
            let (a, b) = (a.map_err(|e| e.to_string())?, b.map_err(|e| e.to_string())?);
            if a != b {
                return Err(format!(
                    "{name}: padded rows changed loss or gradients (valid {valid})"
                ));
            }
            cases += 1;
        }
    }
    verdict(
        true,
        format!("{cases} cases over 4 models, loss and every gradient unchanged"),
    )
}

// 5
fn chopper_oracle(_: &Lab) -> Outcome {
    let cfg = ChopConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let labels = SegmentLabels {
        segment_id: "s".into(),
        speaker_id: "p".into(),
        emotion: 0,
        gender: Gender::F,
    };
    for _ in 0..500 {
        let t = rng.random_range(1..3000usize);
        let d = rng.random_range(1..4usize);
        let feats = Array2::from_shape_fn((t, d), |(r, c)| (r * d + c + 1) as f32);
        let subs = chop(feats.view(), &labels, &cfg).map_err(|e| e.to_string())?;
        let n = if t <= 300 {
            1
        } else {
            (t - 300).div_ceil(200) + 1
        };
        if subs.len() != n {
            return Err(format!("T={t}: {} windows, expected {n}", subs.len()));
        }
        let mut covered = vec![false; t];
        for (i, s) in subs.iter().enumerate() {
            let start = 200 * i;
            let valid = 300.min(t - start);
            if s.offset != start || s.valid_frames != valid || s.values.dim() != (300, d) {
                return Err(format!("T={t}: window {i} misplaced"));
            }
            for r in 0..300 {
                for c in 0..d {
                    let want = if r < valid {
                        feats[(start + r, c)]
                    } else {
                        0.0
                    };
                    if s.values[(r, c)] != want {
                        return Err(format!("T={t}: window {i} row {r} differs"));
                    }
                }
            }
            covered[start..start + valid]
                .iter_mut()
                .for_each(|v| *v = true);
            if i > 0 {
                let prev = &subs[i - 1];
                let overlap = (prev.offset + prev.valid_frames).min(start + valid) - start;
                if overlap != 100 {
                    return Err(format!(
                        "T={t}: windows {} and {i} overlap {overlap}",
                        i - 1
                    ));
                }
            }
        }
        if covered.iter().any(|c| !c) {
            return Err(format!("T={t}: frames left uncovered"));
        }
    }
    verdict(
        true,
        "500 lengths, counts, coverage and 100-frame overlaps exact".into(),
    )
}

fn record(id: usize, speaker: usize, emotion: &str) -> UtteranceRecord {
    UtteranceRecord {
        id: format!("u{id}"),
        audio_path: format!("u{id}.wav"),
        speaker_id: format!("s{speaker}"),
        gender: if speaker.is_multiple_of(2) {
            Gender::F
        } else {
            Gender::M
        },
        emotion: emotion.into(),
        duration_s: 1.0,
        ann_a: None,
        ann_b: None,
    }
}

// 6
fn balancing(_: &Lab) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for trial in 0..100 {
        let e = rng.random_range(2..=5);
        let mut labels: Vec<usize> = (0..e).collect();
        for _ in 0..rng.random_range(0..300) {
            // skewed draws so classes differ widely in size
            labels.push(rng.random_range(0..e).min(rng.random_range(0..e)));
        }
        labels.shuffle(&mut rng);
        let idx = oversample_balance(&labels, e, trial).map_err(|x| x.to_string())?;
        let mut counts = vec![0usize; e];
        idx.iter().for_each(|&i| counts[labels[i]] += 1);
        let original: BTreeMap<usize, usize> = (0..labels.len()).map(|i| (i, 0)).collect();
        let mut seen = original;
        idx.iter()
            .for_each(|&i| *seen.get_mut(&i).expect("index in range") += 1);
        if counts.iter().any(|&c| c != counts[0]) || seen.values().any(|&n| n == 0) {
            return Err(format!(
                "trial {trial}: counts {counts:?} or an item was dropped"
            ));
        }

        let speakers = rng.random_range(1..12);
        let mut records = Vec::new();
        for s in 0..speakers {
            for _ in 0..rng.random_range(1..30) {
                let emo = CLASSES[rng.random_range(0..4)];
                records.push(record(records.len(), s, emo));
            }
        }
        let fraction = rng.random_range(0.01..=1.0);
        let kept = downsample_neutral(&records, "neutral", fraction, trial);
        let neutral_speakers = |rs: &[UtteranceRecord]| -> BTreeSet<String> {
            rs.iter()
                .filter(|r| r.emotion == "neutral")
                .map(|r| r.speaker_id.clone())
                .collect()
        };
        let non_neutral = |rs: &[UtteranceRecord]| -> Vec<String> {
            rs.iter()
                .filter(|r| r.emotion != "neutral")
                .map(|r| r.id.clone())
                .collect()
        };
        if neutral_speakers(&kept) != neutral_speakers(&records)
            || non_neutral(&kept) != non_neutral(&records)
        {
            return Err(format!(
                "trial {trial}: neutral floor or non-neutral records lost"
            ));
        }
    }
    verdict(
        true,
        "100 corpora, equal counts, nothing dropped, neutral kept per speaker".into(),
    )
}

// 7
fn protocol_hygiene(_: &Lab) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for trial in 0..100 {
        let k = rng.random_range(2..=6);
        let n = rng.random_range(2 * k..=40);
        let records: Vec<_> = (0..n * 3).map(|i| record(i, i % n, "anger")).collect();
        let manifest = CorpusManifest::new(records);
        let scheme = if trial % 3 == 2 {
            FoldScheme::SessionSplit
        } else {
            FoldScheme::Coverage
        };
        let folds = speaker_kfold(&manifest, k, trial, scheme).map_err(|e| e.to_string())?;
        let mut tested: BTreeMap<&str, usize> = BTreeMap::new();
        for f in &folds {
            let all: BTreeSet<&String> = f
                .train_speakers
                .iter()
                .chain(&f.val_speakers)
                .chain(&f.test_speakers)
                .collect();
            let sizes = f.train_speakers.len() + f.val_speakers.len() + f.test_speakers.len();
            if !f.is_disjoint() || all.len() != sizes || all.len() != n {
                return Err(format!(
                    "trial {trial}: fold {} overlaps or misses speakers",
                    f.fold_index
                ));
            }
            for s in &f.test_speakers {
                *tested.entry(s).or_default() += 1;
            }
        }
        let once = match scheme {
            FoldScheme::Coverage => tested.len() == n && tested.values().all(|&c| c == 1),
            FoldScheme::SessionSplit => tested.values().all(|&c| c == 1),
        };
        if folds.len() != k || !once {
            return Err(format!("trial {trial}: speakers not tested exactly once"));
        }
    }
    verdict(
        true,
        "100 manifests, disjoint splits, each speaker tested once".into(),
    )
}

// 8
fn learnability(lab: &Lab) -> Outcome {
    let run = lab.main();
    let r = &run.outcome.report;
    let folds: Vec<String> = r.folds.iter().map(|f| fmt_ua(f.report.ua)).collect();
    let best = r.best_ua.unwrap_or(0.0);
    let mean = r.mean_ua.unwrap_or(0.0);
    verdict(
        best >= 0.90 && mean >= 0.80 && run.elapsed <= Duration::from_secs(15 * 60),
        format!(
            "best UA {best:.4}, mean UA {mean:.4} (folds {}), {EPOCHS} epochs, {:.0}s",
            folds.join(" "),
            run.elapsed.as_secs_f64()
        ),
    )
}

// 8, control
fn shuffled_control(lab: &Lab) -> Outcome {
    let mut corpus = lab.a().clone();
    corpus.emotions.shuffle(&mut ChaCha8Rng::seed_from_u64(88));
    for (r, &e) in corpus.records.iter_mut().zip(&corpus.emotions) {
        r.emotion = CLASSES[e].into();
    }
    let run = run_crossval(&corpus);
    let mean = run.outcome.report.mean_ua.unwrap_or(f64::NAN);
    verdict(
        (mean - 0.25).abs() <= 0.10,
        format!(
            "label-shuffled mean UA {mean:.4}, {:.0}s",
            run.elapsed.as_secs_f64()
        ),
    )
}

// 9
fn multitask_contract(lab: &Lab) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let net = Network::<f64>::new(tiny_model_spec(true), Shape2D::new(12, 9), 9)
        .map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for i in 0..50 {
        let x: Vec<f64> = (0..108).map(|_| rng.random_range(-1.0..1.0)).collect();
        let t = Targets {
            emotion: rng.random_range(0..3),
            gender: Some(rng.random_range(0..2)),
        };
        let (lb, _) = net
            .sample_gradients(&x, rng.random_range(1..=12), t, Some(i))
            .map_err(|e| e.to_string())?;
        let g = lb
            .loss_gender
            .ok_or("multitask loss without a gender term")?;
        worst = worst.max((lb.total - (lb.loss_emotion + g)).abs());
        let direct = multitask_total(lb.loss_emotion, g, true);
        worst = worst.max((direct.total - lb.total).abs());
    }
    let r = &lab.main().outcome.report;
    let pooled = r.gender_pooled_ua.unwrap_or(0.0);
    verdict(
        worst <= 1e-12 && pooled >= 0.95,
        format!(
            "|total − sum| {worst:.1e}; gender UA pooled {pooled:.4}, fold mean {}",
            fmt_ua(r.gender_mean_ua)
        ),
    )
}

// 10
fn cross_corpus_direction(lab: &Lab) -> Outcome {
    let within = run_crossval(lab.b()).outcome.report.mean_ua.unwrap_or(0.0);
    let cross = cross_corpus(lab.a(), lab.b(), &ProtocolConfig::default(), &learner())
        .map_err(|e| e.to_string())?;
    let ua = cross.report.ua.unwrap_or(0.0);
    verdict(
        ua < within,
        format!("A → B UA {ua:.4} < within-B mean UA {within:.4}"),
    )
}

// 11
fn determinism(lab: &Lab) -> Outcome {
    let first = &lab.main().outcome;
    let second = run_crossval(lab.a()).outcome;
    let fingerprint = |o: &CrossValOutcome| -> Vec<Vec<u8>> {
        let mut parts = vec![
            serde_json::to_vec(&o.report).expect("report json"),
            o.report.to_csv().into_bytes(),
        ];
        for a in &o.artifacts {
            parts.push(serde_json::to_vec(&a.log).expect("log json"));
            parts.push(serde_json::to_vec(&a.stats).expect("stats json"));
            if let Some(net) = &a.network {
                parts.push(encode_checkpoint(&net.params));
            }
        }
        parts
    };
    let (a, b) = (fingerprint(first), fingerprint(&second));
    let bytes: usize = a.iter().map(Vec::len).sum();
    verdict(
        a == b && first.artifacts.iter().all(|x| x.network.is_some()),
        format!("{} artifacts, {bytes} bytes identical", a.len()),
    )
}

// 12
fn lr_schedule(_: &Lab) -> Outcome {
    let cfg = OptimizerConfig::default();
    let got: Vec<f64> = [0, 999, 1000, 2500]
        .iter()
        .map(|&s| lr_at_step(s, &cfg))
        .collect();
    verdict(got == [1e-4, 1e-4, 9e-5, 8.1e-5], format!("{got:?}"))
}

type Criterion = (&'static str, &'static str, fn(&Lab) -> Outcome);

const CRITERIA: [Criterion; 13] = [
    ("1", "gradient integrity", gradient_integrity),
    ("2", "metric oracle", metric_oracle),
    ("3", "mask formula", mask_formula),
    ("4", "padding invisibility", padding_invisibility),
    ("5", "chopper oracle", chopper_oracle),
    ("6", "balancing", balancing),
    ("7", "protocol hygiene", protocol_hygiene),
    ("12", "lr schedule", lr_schedule),
    ("8", "end-to-end learnability", learnability),
    ("9", "multitask contract", multitask_contract),
    ("11", "determinism", determinism),
    ("8c", "shuffled-label control", shuffled_control),
    ("10", "cross-corpus direction", cross_corpus_direction),
];

fn main() -> ExitCode {
    let filters: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let lab = Lab::new();
    let mut failed = 0;
    let mut ran = 0;
    for (id, name, f) in CRITERIA {
        if !filters.is_empty() && !filters.iter().any(|q| name.contains(q.as_str()) || id == q) {
            continue;
        }
        ran += 1;
        let t = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(|| f(&lab))).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = t.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS [{id:>2}] {name}: {detail} ({secs:.1}s)"),
            Err(detail) => {
                failed += 1;
                println!("FAIL [{id:>2}] {name}: {detail} ({secs:.1}s)");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", ran - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
