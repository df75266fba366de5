use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::s;
use ser_core::corpus::{apply_label_map, load_manifest, CorpusManifest, FoldScheme, LabelMap};
use ser_core::dsp::{read_feature_cache, FeatureConfig};
use ser_core::evaluator::{LabeledCorpus, ProtocolConfig};
use ser_core::exec::ExecMode;
use ser_core::net::ModelSpec;
use ser_core::segment::ChopConfig;
use ser_core::trainer::OptimizerConfig;
use serde::{Deserialize, Serialize};

use crate::args::{ExperimentArgs, FeatureArgs, SchemeArg, TaskArgs};
use crate::error::CliError;

pub const CACHE_CONFIG: &str = "features.json";

pub fn feature_config(args: &FeatureArgs) -> Result<FeatureConfig, CliError> {
    if args.n_mels == 0 {
        return Err(CliError::usage("--n-mels must be positive"));
    }
    Ok(FeatureConfig {
        n_mels: args.n_mels,
        use_deltas: args.use_deltas(),
        ..FeatureConfig::default()
    })
}

pub fn cache_file(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.serf"))
}

pub fn read_cache_config(dir: &Path) -> Result<FeatureConfig, CliError> {
    let p = dir.join(CACHE_CONFIG);
    let text = fs::read_to_string(&p).map_err(|e| CliError::io(&p, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// The label map an experiment asks for. Without `--map` or `--preset`, the class count
/// picks `4`, `3-negative` or `2-negative`; a corpus whose labels do not fit that preset but
/// has exactly `classes` distinct labels gets an identity map.
pub fn label_map(task: &TaskArgs, manifest: &CorpusManifest) -> Result<LabelMap, CliError> {
    let present: Vec<String> = manifest
        .records
        .iter()
        .map(|r| r.emotion.to_lowercase())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let map = if !task.maps.is_empty() {
        if task.preset.is_some() {
            return Err(CliError::usage("--map and --preset are mutually exclusive"));
        }
        LabelMap::custom(task.classes, &task.maps, &present)
            .map_err(|e| CliError::usage(e.to_string()))?
    } else if let Some(p) = &task.preset {
        LabelMap::preset(p).map_err(|e| CliError::usage(e.to_string()))?
    } else {
        let name = match task.classes {
            4 => "4",
            3 => "3-negative",
            2 => "2-negative",
            n => {
                return Err(CliError::usage(format!(
                    "no default label map for {n} classes; use --map"
                )))
            }
        };
        let preset = LabelMap::preset(name).expect("built-in preset");
        let fits = present.iter().all(|l| preset.target(l).is_ok());
        if !fits && present.len() == task.classes {
            LabelMap::identity(&present)?
        } else {
            preset
        }
    };
    if map.n_classes() != task.classes {
        return Err(CliError::usage(format!(
            "label map has {} classes but --classes is {}",
            map.n_classes(),
            task.classes
        )));
    }
    Ok(map)
}

/// Loads, label-maps and featurizes a manifest. With a cache directory the features come
/// from `featurize` output; deltas are sliced off when the cache has them and the run
/// does not want them.
pub fn load_corpus(
    manifest_path: &Path,
    cache: Option<&Path>,
    map: Option<&LabelMap>,
    task: &TaskArgs,
    features: &FeatureConfig,
    exec: ExecMode,
) -> Result<(LabeledCorpus, LabelMap), CliError> {
    let manifest = load_manifest(manifest_path)?;
    let map = match map {
        Some(m) => m.clone(),
        None => label_map(task, &manifest)?,
    };
    let mapped = apply_label_map(&manifest, &map)?;
    if mapped.is_empty() {
        return Err(CliError::data("no records left after label mapping"));
    }
    let names = map.task_classes().to_vec();
    let corpus = match cache {
        None => LabeledCorpus::featurize(&mapped, names, features, exec)?,
        Some(dir) => {
            let cached = read_cache_config(dir)?;
            if cached.n_mels != features.n_mels || cached.stft != features.stft {
                return Err(CliError::data(format!(
                    "{}: cache holds {} mel bands, run asks for {}",
                    dir.display(),
                    cached.n_mels,
                    features.n_mels
                )));
            }
            if features.use_deltas && !cached.use_deltas {
                return Err(CliError::data(format!(
                    "{}: cache has no delta features",
                    dir.display()
                )));
            }
            let width = features.dims();
            LabeledCorpus::from_manifest(&mapped, names, exec, |r| {
                let m = read_feature_cache(cache_file(dir, &r.id))?;
                Ok(m.slice(s![.., ..width]).to_owned())
            })?
        }
    };
    Ok((corpus, map))
}

/// Everything that determines a run, stored next to its outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub condition: String,
    pub experiment: ExperimentArgs,
    pub features: FeatureConfig,
    pub model: ModelSpec,
    pub optimizer: OptimizerConfig,
    pub protocol: ProtocolConfig,
    pub label_map: LabelMap,
}

pub fn exec_mode(sequential: bool) -> ExecMode {
    if sequential {
        ExecMode::Sequential
    } else {
        ExecMode::default()
    }
}

pub fn run_config(
    args: &ExperimentArgs,
    label_map: LabelMap,
    features: FeatureConfig,
) -> Result<RunConfig, CliError> {
    let model = ModelSpec::preset(args.model.name(), label_map.n_classes(), args.multitask())
        .expect("every model kind has a preset");
    let optimizer = OptimizerConfig {
        lr0: args.lr,
        decay_rate: args.decay_rate,
        decay_steps: args.decay_steps,
        batch_size: args.batch_size,
        max_epochs: args.epochs,
        seed: args.seed,
        ..OptimizerConfig::default()
    };
    optimizer
        .validate()
        .map_err(|e| CliError::usage(e.to_string()))?;
    let chop = ChopConfig {
        window_s: args.window,
        overlap_s: args.overlap,
        frame_hop_s: features.stft.frame_hop_s(),
    };
    chop.validate()?;
    let protocol = ProtocolConfig {
        k: args.folds,
        scheme: match args.scheme {
            SchemeArg::Coverage => FoldScheme::Coverage,
            SchemeArg::SessionSplit => FoldScheme::SessionSplit,
        },
        seed: args.seed,
        chop,
        neutral_downsample: args.neutral_fraction,
        neutral_label: args.neutral_label.to_lowercase(),
        validation_fraction: 0.2,
        exec: exec_mode(args.sequential),
    };
    if let Some(f) = args.neutral_fraction {
        if !(f > 0.0 && f <= 1.0) {
            return Err(CliError::usage(format!(
                "--neutral-fraction {f} outside (0, 1]"
            )));
        }
    }
    Ok(RunConfig {
        condition: args.condition(),
        experiment: args.clone(),
        features,
        model,
        optimizer,
        protocol,
        label_map,
    })
}

pub fn check_condition_name(name: &str) -> Result<(), CliError> {
    let ok = !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
        && name != "."
        && name != "..";
    if ok {
        Ok(())
    } else {
        Err(CliError::usage(format!(
            "condition `{name}` must use letters, digits, '-', '_' or '.'"
        )))
    }
}
