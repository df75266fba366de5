use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{CorpusError, CorpusManifest};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Class(String),
    Drop,
}

/// Maps source emotion labels (case-insensitive) onto an ordered list of task classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMap {
    entries: BTreeMap<String, Target>,
    task_classes: Vec<String>,
}

/// Named task presets: 4-way, both 3-way variants and the three 2-way variants.
pub const PRESETS: [&str; 7] = [
    "4",
    "3-anger",
    "3-negative",
    "2-anger",
    "2-negative",
    "2-valence",
    "iemocap-4",
];

impl LabelMap {
    pub fn new(
        task_classes: Vec<String>,
        entries: BTreeMap<String, Target>,
    ) -> Result<Self, CorpusError> {
        let entries: BTreeMap<String, Target> = entries
            .into_iter()
            .map(|(k, v)| (k.to_lowercase(), v))
            .collect();
        let mut seen = BTreeSet::new();
        for c in &task_classes {
            if !seen.insert(c) {
                return Err(CorpusError::LabelMap(format!("duplicate task class `{c}`")));
            }
        }
        for (src, t) in &entries {
            if let Target::Class(c) = t {
                if !task_classes.contains(c) {
                    return Err(CorpusError::LabelMap(format!(
                        "`{src}` maps to unknown class `{c}`"
                    )));
                }
            }
        }
        for c in &task_classes {
            if !entries.values().any(|t| t == &Target::Class(c.clone())) {
                return Err(CorpusError::LabelMap(format!(
                    "task class `{c}` is unreachable"
                )));
            }
        }
        if task_classes.len() < 2 {
            return Err(CorpusError::LabelMap(
                "at least two task classes are required".into(),
            ));
        }
        Ok(Self {
            entries,
            task_classes,
        })
    }

    pub fn identity<S: AsRef<str>>(labels: &[S]) -> Result<Self, CorpusError> {
        let classes: Vec<String> = labels.iter().map(|l| l.as_ref().to_lowercase()).collect();
        let entries = classes
            .iter()
            .map(|c| (c.clone(), Target::Class(c.clone())))
            .collect();
        Self::new(classes, entries)
    }

    pub fn preset(name: &str) -> Result<Self, CorpusError> {
        let class = |c: &str| Target::Class(c.to_string());
        let (classes, pairs): (Vec<&str>, Vec<(&str, Target)>) = match name {
            "4" => (
                vec!["anger", "fear", "positive", "neutral"],
                vec![
                    ("anger", class("anger")),
                    ("fear", class("fear")),
                    ("positive", class("positive")),
                    ("neutral", class("neutral")),
                ],
            ),
            "iemocap-4" => (
                vec!["anger", "sadness", "happy", "neutral"],
                vec![
                    ("anger", class("anger")),
                    ("sadness", class("sadness")),
                    ("happy", class("happy")),
                    ("neutral", class("neutral")),
                ],
            ),
            "3-anger" => (
                vec!["anger", "positive", "neutral"],
                vec![
                    ("anger", class("anger")),
                    ("fear", Target::Drop),
                    ("positive", class("positive")),
                    ("neutral", class("neutral")),
                ],
            ),
            "3-negative" => (
                vec!["negative", "positive", "neutral"],
                vec![
                    ("anger", class("negative")),
                    ("fear", class("negative")),
                    ("positive", class("positive")),
                    ("neutral", class("neutral")),
                ],
            ),
            "2-anger" => (
                vec!["anger", "neutral"],
                vec![
                    ("anger", class("anger")),
                    ("fear", Target::Drop),
                    ("positive", Target::Drop),
                    ("neutral", class("neutral")),
                ],
            ),
            "2-negative" => (
                vec!["negative", "neutral"],
                vec![
                    ("anger", class("negative")),
                    ("fear", class("negative")),
                    ("positive", Target::Drop),
                    ("neutral", class("neutral")),
                ],
            ),
            "2-valence" => (
                vec!["positive", "negative"],
                vec![
                    ("anger", class("negative")),
                    ("fear", class("negative")),
                    ("positive", class("positive")),
                    ("neutral", Target::Drop),
                ],
            ),
            other => {
                return Err(CorpusError::LabelMap(format!(
                    "unknown preset `{other}` (known: {})",
                    PRESETS.join(", ")
                )))
            }
        };
        Self::new(
            classes.into_iter().map(String::from).collect(),
            pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        )
    }

    /// Builds a map from `task=src1+src2` specs. When fewer than `n_classes` classes are
    /// specified, remaining source labels become identity classes (`neutral` first, then
    /// alphabetical) until `n_classes` is reached; everything else is dropped.
    pub fn custom<S: AsRef<str>>(
        n_classes: usize,
        specs: &[S],
        present_labels: &[String],
    ) -> Result<Self, CorpusError> {
        let mut classes = Vec::new();
        let mut entries = BTreeMap::new();
        for spec in specs {
            let spec = spec.as_ref();
            let (task, sources) = spec.split_once('=').ok_or_else(|| {
                CorpusError::LabelMap(format!("expected task=src1+src2, got `{spec}`"))
            })?;
            let task = task.trim().to_lowercase();
            if task.is_empty() {
                return Err(CorpusError::LabelMap(format!(
                    "empty task name in `{spec}`"
                )));
            }
            for src in sources.split('+').map(|s| s.trim().to_lowercase()) {
                if src.is_empty() {
                    return Err(CorpusError::LabelMap(format!(
                        "empty source label in `{spec}`"
                    )));
                }
                if entries
                    .insert(src.clone(), Target::Class(task.clone()))
                    .is_some()
                {
                    return Err(CorpusError::LabelMap(format!(
                        "source `{src}` mapped twice"
                    )));
                }
            }
            classes.push(task);
        }
        let mut rest: Vec<String> = present_labels
            .iter()
            .map(|l| l.to_lowercase())
            .filter(|l| !entries.contains_key(l))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        rest.sort_by_key(|l| (l != "neutral", l.clone()));
        for label in rest {
            if classes.len() < n_classes && !classes.contains(&label) {
                classes.push(label.clone());
                entries.insert(label.clone(), Target::Class(label));
            } else {
                entries.insert(label, Target::Drop);
            }
        }
        if classes.len() != n_classes {
            return Err(CorpusError::LabelMap(format!(
                "asked for {n_classes} classes, map yields {}",
                classes.len()
            )));
        }
        Self::new(classes, entries)
    }

    pub fn task_classes(&self) -> &[String] {
        &self.task_classes
    }

    pub fn n_classes(&self) -> usize {
        self.task_classes.len()
    }

    pub fn target(&self, label: &str) -> Result<&Target, CorpusError> {
        self.entries
            .get(&label.to_lowercase())
            .ok_or_else(|| CorpusError::UnmappedLabel(label.to_string()))
    }

    /// Task class index, or `None` for dropped labels.
    pub fn class_index(&self, label: &str) -> Result<Option<usize>, CorpusError> {
        Ok(match self.target(label)? {
            Target::Drop => None,
            Target::Class(c) => self.task_classes.iter().position(|t| t == c),
        })
    }
}

/// Drops `DROP` records and renames the rest to their task class.
pub fn apply_label_map(
    manifest: &CorpusManifest,
    map: &LabelMap,
) -> Result<CorpusManifest, CorpusError> {
    let mut records = Vec::with_capacity(manifest.len());
    for r in &manifest.records {
        if let Target::Class(c) = map.target(&r.emotion)? {
            let mut r = r.clone();
            r.emotion = c.clone();
            records.push(r);
        }
    }
    Ok(CorpusManifest {
        records,
        base_dir: manifest.base_dir.clone(),
    })
}
