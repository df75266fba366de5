use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{major_label_kappa, CorpusError, CorpusManifest, Gender};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShareRow {
    pub key: String,
    pub count: usize,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DurationStats {
    pub mean_s: f64,
    pub median_s: f64,
    pub min_s: f64,
    pub max_s: f64,
    pub total_s: f64,
}

/// Aggregates behind the class-share, emotions-per-speaker and speakers-per-class figures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n_segments: usize,
    pub n_speakers: usize,
    /// Segment share per emotion class.
    pub class_distribution: Vec<ShareRow>,
    /// Speakers expressing exactly `key` distinct classes, as a share of all speakers.
    pub emotions_per_speaker: Vec<ShareRow>,
    /// Speakers with at least one segment of each class, as a share of all speakers.
    pub speakers_per_class: Vec<ShareRow>,
    pub gender_segments: Vec<ShareRow>,
    pub gender_speakers: Vec<ShareRow>,
    pub segments_per_speaker: DurationStats,
    pub duration: DurationStats,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
}

fn summary(mut values: Vec<f64>) -> DurationStats {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    let median = if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    };
    let total: f64 = values.iter().sum();
    DurationStats {
        mean_s: total / n as f64,
        median_s: median,
        min_s: values[0],
        max_s: values[n - 1],
        total_s: total,
    }
}

fn rows(counts: BTreeMap<String, usize>, denom: usize) -> Vec<ShareRow> {
    counts
        .into_iter()
        .map(|(key, count)| ShareRow {
            key,
            count,
            share: count as f64 / denom as f64,
        })
        .collect()
}

pub fn corpus_stats(manifest: &CorpusManifest) -> Result<CorpusStats, CorpusError> {
    if manifest.is_empty() {
        return Err(CorpusError::EmptyManifest);
    }
    let n = manifest.len();
    let mut classes: BTreeMap<String, usize> = BTreeMap::new();
    let mut per_speaker: BTreeMap<&str, (BTreeSet<&str>, usize, Gender)> = BTreeMap::new();
    let mut gender_segments: BTreeMap<String, usize> = BTreeMap::new();
    for r in &manifest.records {
        *classes.entry(r.emotion.clone()).or_default() += 1;
        *gender_segments.entry(r.gender.to_string()).or_default() += 1;
        let e = per_speaker
            .entry(&r.speaker_id)
            .or_insert_with(|| (BTreeSet::new(), 0, r.gender));
        e.0.insert(&r.emotion);
        e.1 += 1;
    }
    let n_speakers = per_speaker.len();
    let mut hist: BTreeMap<String, usize> =
        (1..=classes.len()).map(|k| (k.to_string(), 0)).collect();
    let mut spk_class: BTreeMap<String, usize> = classes.keys().map(|c| (c.clone(), 0)).collect();
    let mut gender_speakers: BTreeMap<String, usize> = BTreeMap::new();
    for (set, _, g) in per_speaker.values() {
        *hist.entry(set.len().to_string()).or_default() += 1;
        for c in set {
            *spk_class.get_mut(*c).expect("class seen") += 1;
        }
        *gender_speakers.entry(g.to_string()).or_default() += 1;
    }
    Ok(CorpusStats {
        n_segments: n,
        n_speakers,
        class_distribution: rows(classes, n),
        emotions_per_speaker: rows(hist, n_speakers),
        speakers_per_class: rows(spk_class, n_speakers),
        gender_segments: rows(gender_segments, n),
        gender_speakers: rows(gender_speakers, n_speakers),
        segments_per_speaker: summary(per_speaker.values().map(|v| v.1 as f64).collect()),
        duration: summary(manifest.records.iter().map(|r| r.duration_s).collect()),
        kappa: major_label_kappa(manifest).transpose()?,
    })
}

impl CorpusStats {
    /// CSV tables keyed by file stem.
    pub fn csv_tables(&self) -> Vec<(&'static str, String)> {
        let table = |header: &str, rows: &[ShareRow]| {
            let mut s = format!("{header},count,share\n");
            for r in rows {
                let _ = writeln!(s, "{},{},{:.6}", r.key, r.count, r.share);
            }
            s
        };
        vec![
            (
                "class_distribution",
                table("class", &self.class_distribution),
            ),
            (
                "emotions_per_speaker",
                table("n_emotions", &self.emotions_per_speaker),
            ),
            (
                "speakers_per_class",
                table("class", &self.speakers_per_class),
            ),
            ("gender_speakers", table("gender", &self.gender_speakers)),
        ]
    }
}
