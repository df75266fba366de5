use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::SystemTime;

use ser_core::corpus::{
    corpus_stats, generate_synthetic_corpus, load_manifest, parse_shares, speaker_kfold,
    CorpusError, SynthConfig,
};
use ser_core::dsp::{featurize, load_wav, write_feature_cache, FeatureConfig, NormStats};
use ser_core::evaluator::{
    cross_corpus, crossval, evaluate_split, fit_split, CrossValReport, EvalReport, FoldArtifacts,
    NetLearner, Strategy,
};
use ser_core::exec::map_indexed;
use ser_core::net::{load_checkpoint, save_checkpoint};
use ser_core::trainer::{
    gradcheck, gradcheck_layers, tiny_model_spec, EpochRecord, GradcheckOptions,
};
use serde::{Deserialize, Serialize};

use crate::args::*;
use crate::data::*;
use crate::error::CliError;

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    write_text(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn print_json<T: Serialize>(value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)?;
    // a closed pipe on stdout is not an error of the run
    let _ = writeln!(std::io::stdout().lock(), "{text}");
    Ok(())
}

fn log_csv(log: &[EpochRecord]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in log {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::data(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

fn progress(run: usize, r: &EpochRecord) {
    eprintln!(
        "run {run} epoch {:>3}  loss {:.4}  val UA {:.4} ({})  lr {:.3e}",
        r.epoch, r.train_loss, r.val_ua, r.strategy, r.lr
    );
}

fn learner(rc: &RunConfig) -> NetLearner {
    let mut l = NetLearner::new(rc.model.clone(), rc.optimizer.clone(), rc.protocol.exec);
    l.on_epoch = Some(Box::new(progress));
    l
}

/// Stored in the checkpoint sidecar so `eval` can reproduce the preprocessing.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointInfo {
    pub run: RunConfig,
    pub norm_stats: NormStats,
    pub strategy: Strategy,
    pub val_ua: f64,
    pub test_speakers: Vec<String>,
}

fn save_artifacts(
    dir: &Path,
    rc: &RunConfig,
    a: &FoldArtifacts,
    test_speakers: &[String],
) -> Result<(), CliError> {
    create_dir(dir)?;
    write_text(&dir.join("log.csv"), &log_csv(&a.log)?)?;
    if let Some(net) = &a.network {
        let info = CheckpointInfo {
            run: rc.clone(),
            norm_stats: a.stats.clone(),
            strategy: a.strategy,
            val_ua: a.val_ua,
            test_speakers: test_speakers.to_vec(),
        };
        save_checkpoint(&dir.join("model.serm"), net, serde_json::to_value(&info)?)?;
    }
    Ok(())
}

pub fn synth(args: SynthArgs) -> Result<(), CliError> {
    let class_shares = parse_shares(&args.shares).map_err(|e| CliError::usage(e.to_string()))?;
    let dir = args.dir.unwrap_or_else(|| args.output.out.join("synth"));
    let cfg = SynthConfig {
        seed: args.seed,
        n_speakers: args.speakers,
        segments_per_speaker: args.per_speaker,
        class_shares,
        duration_range_s: (args.min_duration, args.max_duration),
        sample_rate_hz: args.sample_rate,
        acoustic_shift_hz: args.shift_hz,
        id_prefix: args.id_prefix,
    };
    let manifest = generate_synthetic_corpus(&cfg, &dir).map_err(|e| match e {
        CorpusError::Synth(_) | CorpusError::LabelMap(_) => CliError::usage(e.to_string()),
        other => other.into(),
    })?;
    #[derive(Serialize)]
    struct Summary {
        dir: PathBuf,
        manifest: PathBuf,
        records: usize,
        speakers: usize,
    }
    print_json(&Summary {
        manifest: dir.join("manifest.jsonl"),
        dir,
        records: manifest.len(),
        speakers: manifest.speakers().len(),
    })
}

#[derive(Debug, Serialize)]
struct FeatureFailure {
    id: String,
    path: PathBuf,
    reason: String,
}

#[derive(Debug, Serialize)]
struct FeaturizeSummary {
    cache: PathBuf,
    written: usize,
    skipped: usize,
    failed: Vec<FeatureFailure>,
}

enum Outcome {
    Written,
    Skipped,
    Failed(FeatureFailure),
}

fn modified(p: &Path) -> Option<SystemTime> {
    fs::metadata(p).and_then(|m| m.modified()).ok()
}

pub fn featurize_cmd(args: FeaturizeArgs) -> Result<(), CliError> {
    let manifest = load_manifest(&args.manifest)?;
    let cfg = feature_config(&args.features)?;
    let dir = args
        .cache
        .unwrap_or_else(|| args.output.out.join("features"));
    create_dir(&dir)?;
    let config_path = dir.join(CACHE_CONFIG);
    let config_matches = read_cache_config(&dir).is_ok_and(|c| c == cfg);
    if !config_matches && config_path.exists() {
        fs::remove_file(&config_path).map_err(|e| CliError::io(&config_path, e))?;
    }
    let outcomes = map_indexed(Default::default(), &manifest.records, |_, r| {
        let target = cache_file(&dir, &r.id);
        let wav = manifest.audio_path(r);
        let fresh = match (modified(&target), modified(&wav)) {
            (Some(t), Some(w)) => t >= w,
            _ => false,
        };
        if config_matches && fresh {
            return Outcome::Skipped;
        }
        let result = load_wav(&wav)
            .and_then(|s| featurize(&s, &cfg))
            .and_then(|f| write_feature_cache(&target, &f.values));
        match result {
            Ok(()) => Outcome::Written,
            Err(e) => {
                let _ = fs::remove_file(&target);
                Outcome::Failed(FeatureFailure {
                    id: r.id.clone(),
                    path: wav,
                    reason: e.to_string(),
                })
            }
        }
    });
    if !config_matches {
        write_json(&config_path, &cfg)?;
    }
    let mut summary = FeaturizeSummary {
        cache: dir,
        written: 0,
        skipped: 0,
        failed: Vec::new(),
    };
    for o in outcomes {
        match o {
            Outcome::Written => summary.written += 1,
            Outcome::Skipped => summary.skipped += 1,
            Outcome::Failed(f) => summary.failed.push(f),
        }
    }
    print_json(&summary)?;
    if summary.failed.is_empty() {
        Ok(())
    } else {
        let ids: Vec<&str> = summary.failed.iter().map(|f| f.id.as_str()).collect();
        Err(CliError::data(format!(
            "{} file(s) failed: {}",
            ids.len(),
            ids.join(", ")
        )))
    }
}

pub fn stats(args: StatsArgs) -> Result<(), CliError> {
    check_condition_name(&args.name)?;
    let manifest = load_manifest(&args.manifest)?;
    let stats = corpus_stats(&manifest)?;
    let dir = args.output.out.join(&args.name);
    create_dir(&dir)?;
    write_json(&dir.join("stats.json"), &stats)?;
    for (stem, table) in stats.csv_tables() {
        write_text(&dir.join(format!("{stem}.csv")), &table)?;
    }
    print_json(&stats)
}

const COMPARISON_HEADER: [&str; 13] = [
    "condition",
    "model",
    "classes",
    "deltas",
    "multitask",
    "folds",
    "mean_ua",
    "mean_wa",
    "best_ua",
    "best_wa",
    "pooled_ua",
    "pooled_wa",
    "gender_mean_ua",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// Replaces the row of this condition in `comparison.csv`, or appends it.
fn upsert_comparison(path: &Path, rc: &RunConfig, r: &CrossValReport) -> Result<(), CliError> {
    let row: Vec<String> = vec![
        rc.condition.clone(),
        rc.experiment.model.name().to_string(),
        rc.label_map.n_classes().to_string(),
        rc.features.use_deltas.to_string(),
        rc.model.multitask.to_string(),
        r.k.to_string(),
        opt(r.mean_ua),
        format!("{:.6}", r.mean_wa),
        opt(r.best_ua),
        opt(r.best_wa),
        opt(r.pooled.ua),
        format!("{:.6}", r.pooled.wa),
        opt(r.gender_mean_ua),
    ];
    let mut rows: Vec<Vec<String>> = Vec::new();
    if path.exists() {
        let mut rd = csv::Reader::from_path(path)?;
        if rd.headers()?.iter().ne(COMPARISON_HEADER) {
            return Err(CliError::data(format!(
                "{}: unexpected header",
                path.display()
            )));
        }
        for rec in rd.records() {
            rows.push(rec?.iter().map(String::from).collect());
        }
    }
    match rows.iter_mut().find(|r| r.first() == Some(&rc.condition)) {
        Some(existing) => *existing = row,
        None => rows.push(row),
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(COMPARISON_HEADER)?;
    for r in &rows {
        w.write_record(r)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn crossval_cmd(args: CrossvalArgs) -> Result<(), CliError> {
    let exp = &args.experiment;
    let condition = exp.condition();
    check_condition_name(&condition)?;
    let features = feature_config(&exp.features)?;
    let exec = exec_mode(exp.sequential);
    let (corpus, map) = load_corpus(
        &args.manifest,
        args.cache.as_deref(),
        None,
        &exp.task,
        &features,
        exec,
    )?;
    let rc = run_config(exp, map, features)?;
    let dir = args.output.out.join(&condition);
    create_dir(&dir)?;
    write_json(&dir.join("config.json"), &rc)?;
    let outcome = crossval(&corpus, &rc.protocol, &learner(&rc))?;
    let report = &outcome.report;
    for (a, f) in outcome.artifacts.iter().zip(&report.folds) {
        save_artifacts(
            &dir.join(format!("fold{}", a.fold_index)),
            &rc,
            a,
            &f.test_speakers,
        )?;
    }
    write_json(&dir.join("report.json"), report)?;
    write_text(&dir.join("report.csv"), &report.to_csv())?;
    upsert_comparison(&args.output.out.join("comparison.csv"), &rc, report)?;
    #[derive(Serialize)]
    struct Summary<'a> {
        condition: &'a str,
        report: PathBuf,
        mean_ua: Option<f64>,
        best_ua: Option<f64>,
        pooled_ua: Option<f64>,
        gender_mean_ua: Option<f64>,
    }
    print_json(&Summary {
        condition: &condition,
        report: dir.join("report.json"),
        mean_ua: report.mean_ua,
        best_ua: report.best_ua,
        pooled_ua: report.pooled.ua,
        gender_mean_ua: report.gender_mean_ua,
    })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TrainSummary {
    pub condition: String,
    pub fold: usize,
    pub train_speakers: Vec<String>,
    pub val_speakers: Vec<String>,
    pub test_speakers: Vec<String>,
    pub train_segments: usize,
    pub train_subsegments: usize,
    pub best_epoch: Option<usize>,
    pub val_ua: f64,
    pub strategy: Strategy,
    pub checkpoint: PathBuf,
}

pub fn train(args: TrainArgs) -> Result<(), CliError> {
    let exp = &args.experiment;
    let condition = exp.condition();
    check_condition_name(&condition)?;
    let features = feature_config(&exp.features)?;
    let exec = exec_mode(exp.sequential);
    let (corpus, map) = load_corpus(
        &args.manifest,
        args.cache.as_deref(),
        None,
        &exp.task,
        &features,
        exec,
    )?;
    let rc = run_config(exp, map, features)?;
    let folds = speaker_kfold(
        &corpus.manifest(),
        rc.protocol.k,
        rc.protocol.seed,
        rc.protocol.scheme,
    )?;
    let split = folds.get(args.fold).ok_or_else(|| {
        CliError::usage(format!(
            "--fold {} out of range for {} folds",
            args.fold,
            folds.len()
        ))
    })?;
    let run = fit_split(
        split.fold_index,
        &corpus,
        corpus.indices_of(&split.train_speakers),
        &corpus.indices_of(&split.val_speakers),
        &rc.protocol,
        &learner(&rc),
    )?;
    let dir = args.output.out.join(&condition);
    let artifacts = FoldArtifacts {
        fold_index: split.fold_index,
        log: run.learned.log,
        network: run.learned.network,
        stats: run.stats,
        strategy: run.strategy,
        val_ua: run.val_ua,
    };
    save_artifacts(&dir, &rc, &artifacts, &split.test_speakers)?;
    write_json(&dir.join("config.json"), &rc)?;
    let summary = TrainSummary {
        condition,
        fold: split.fold_index,
        train_speakers: split.train_speakers.clone(),
        val_speakers: split.val_speakers.clone(),
        test_speakers: split.test_speakers.clone(),
        train_segments: run.train_segments,
        train_subsegments: run.train_subsegments,
        best_epoch: run.learned.best_epoch,
        val_ua: run.val_ua,
        strategy: run.strategy,
        checkpoint: dir.join("model.serm"),
    };
    write_json(&dir.join("train.json"), &summary)?;
    print_json(&summary)
}

pub fn eval(args: EvalArgs) -> Result<(), CliError> {
    let (net, meta) = load_checkpoint(&args.checkpoint)?;
    let info: CheckpointInfo = serde_json::from_value(meta.extra).map_err(|e| {
        CliError::data(format!(
            "{}: checkpoint metadata: {e}",
            args.checkpoint.display()
        ))
    })?;
    let exec = exec_mode(args.sequential);
    let run = &info.run;
    let (corpus, _) = load_corpus(
        &args.manifest,
        args.cache.as_deref(),
        Some(&run.label_map),
        &run.experiment.task,
        &run.features,
        exec,
    )?;
    if corpus.dims() != net.input.width {
        return Err(CliError::data(format!(
            "features have {} dimensions, model expects {}",
            corpus.dims(),
            net.input.width
        )));
    }
    let speakers = if args.all {
        corpus.speakers()
    } else if !args.speakers.is_empty() {
        args.speakers.clone()
    } else {
        info.test_speakers.clone()
    };
    let idx = corpus.indices_of(&speakers);
    if idx.is_empty() {
        return Err(CliError::data("no segments from the requested speakers"));
    }
    let report: EvalReport = evaluate_split(
        &net,
        &corpus,
        &idx,
        &info.norm_stats,
        info.strategy,
        info.val_ua,
        &run.protocol.chop,
        exec,
    )?;
    let path = args.report.unwrap_or_else(|| {
        args.checkpoint
            .parent()
            .unwrap_or(Path::new("."))
            .join("eval.json")
    });
    write_json(&path, &report)?;
    print_json(&report)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CrossCorpusReport {
    pub condition: String,
    pub train_speakers: Vec<String>,
    pub val_speakers: Vec<String>,
    pub report: EvalReport,
}

pub fn crosscorpus(args: CrossCorpusArgs) -> Result<(), CliError> {
    let exp = &args.experiment;
    let condition = exp.condition();
    check_condition_name(&condition)?;
    if !(args.val_fraction > 0.0 && args.val_fraction < 1.0) {
        return Err(CliError::usage(format!(
            "--val-fraction {} outside (0, 1)",
            args.val_fraction
        )));
    }
    let features: FeatureConfig = feature_config(&exp.features)?;
    let exec = exec_mode(exp.sequential);
    let (train_corpus, map) = load_corpus(
        &args.train_manifest,
        args.train_cache.as_deref(),
        None,
        &exp.task,
        &features,
        exec,
    )?;
    let (test_corpus, _) = load_corpus(
        &args.test_manifest,
        args.test_cache.as_deref(),
        Some(&map),
        &exp.task,
        &features,
        exec,
    )?;
    let mut rc = run_config(exp, map, features)?;
    rc.protocol.validation_fraction = args.val_fraction;
    let dir = args.output.out.join(&condition);
    create_dir(&dir)?;
    write_json(&dir.join("config.json"), &rc)?;
    let out = cross_corpus(&train_corpus, &test_corpus, &rc.protocol, &learner(&rc))?;
    save_artifacts(&dir, &rc, &out.artifacts, &test_corpus.speakers())?;
    let report = CrossCorpusReport {
        condition,
        train_speakers: out.train_speakers,
        val_speakers: out.val_speakers,
        report: out.report,
    };
    write_json(&dir.join("crosscorpus.json"), &report)?;
    print_json(&report)
}

pub fn gradcheck_cmd(args: GradcheckArgs) -> Result<(), CliError> {
    if !(args.threshold > 0.0) {
        return Err(CliError::usage("--threshold must be positive"));
    }
    let opts = GradcheckOptions {
        threshold: args.threshold,
        corrupt: args.corrupt,
        ..GradcheckOptions::default()
    };
    let prefixed = |name: &str, mut r: ser_core::trainer::GradcheckReport| {
        for e in &mut r.entries {
            e.layer = format!("{name}/{}", e.layer);
        }
        r
    };
    let report = gradcheck_layers(args.seed, &opts)?
        .merge(prefixed(
            "model",
            gradcheck(&tiny_model_spec(true), args.seed, &opts)?,
        ))
        .merge(prefixed(
            "model_emotion_only",
            gradcheck(&tiny_model_spec(false), args.seed, &opts)?,
        ));
    if let Some(p) = &args.report {
        write_json(p, &report)?;
    }
    print_json(&report)?;
    if report.passed {
        Ok(())
    } else {
        Err(CliError::numerical(format!(
            "gradient check failed: max relative error {:.3e} exceeds {:.1e}",
            report.max_rel_err, report.threshold
        )))
    }
}
