//! Seeded synthetic corpus standing in for the unavailable recordings.
//!
//! Every emotion class is a distinct acoustic family: band-limited noise around a
//! class-specific centre frequency, amplitude-modulated at a class-specific rate. Speakers
//! carry a harmonic "voice" whose fundamental depends on gender (M: 95–135 Hz,
//! F: 190–240 Hz). Generation is fully determined by the seed.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CorpusError, CorpusManifest, Gender, UtteranceRecord};
use crate::dsp::{write_wav, AudioSignal, SUPPORTED_RATES};
use crate::exec::{map_range, ExecMode};

/// Named share presets: `balanced`, `cemo-like` (neutral-dominant) and `iemocap-like`.
pub const SHARE_PRESETS: [&str; 3] = ["balanced", "cemo-like", "iemocap-like"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_speakers: usize,
    pub segments_per_speaker: usize,
    /// `(class label, share)`, shares summing to 1.
    pub class_shares: Vec<(String, f64)>,
    pub duration_range_s: (f64, f64),
    pub sample_rate_hz: u32,
    /// Added to every class centre frequency (Hz); used to build acoustically shifted corpora.
    pub acoustic_shift_hz: f64,
    /// Prefix for speaker and utterance ids, so corpora can be kept disjoint.
    pub id_prefix: String,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            n_speakers: 24,
            segments_per_speaker: 40,
            class_shares: parse_shares("balanced").expect("preset"),
            duration_range_s: (0.8, 2.6),
            sample_rate_hz: 8000,
            acoustic_shift_hz: 0.0,
            id_prefix: String::new(),
        }
    }
}

/// Resolves a preset name or a `label=share,label=share` list.
pub fn parse_shares(spec: &str) -> Result<Vec<(String, f64)>, CorpusError> {
    let pairs: Vec<(&str, f64)> = match spec {
        "balanced" => vec![
            ("anger", 0.25),
            ("fear", 0.25),
            ("positive", 0.25),
            ("neutral", 0.25),
        ],
        "cemo-like" => vec![
            ("anger", 0.14),
            ("fear", 0.06),
            ("positive", 0.10),
            ("neutral", 0.70),
        ],
        "iemocap-like" => vec![
            ("anger", 0.13),
            ("sadness", 0.27),
            ("happy", 0.12),
            ("neutral", 0.48),
        ],
        custom => {
            let mut out = Vec::new();
            for item in custom.split(',') {
                let (label, share) = item.split_once('=').ok_or_else(|| {
                    CorpusError::Synth(format!("expected label=share, got `{item}`"))
                })?;
                let share: f64 = share
                    .trim()
                    .parse()
                    .map_err(|_| CorpusError::Synth(format!("bad share in `{item}`")))?;
                out.push((label.trim().to_lowercase(), share));
            }
            validate_shares(&out)?;
            return Ok(out);
        }
    };
    Ok(pairs.into_iter().map(|(l, s)| (l.to_string(), s)).collect())
}

fn validate_shares(shares: &[(String, f64)]) -> Result<(), CorpusError> {
    if shares.len() < 2 {
        return Err(CorpusError::Synth("need at least two classes".into()));
    }
    if shares
        .iter()
        .any(|(l, s)| l.is_empty() || !(*s >= 0.0 && s.is_finite()))
    {
        return Err(CorpusError::Synth(
            "shares must be finite and nonnegative with nonempty labels".into(),
        ));
    }
    let total: f64 = shares.iter().map(|(_, s)| s).sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(CorpusError::Synth(format!("shares sum to {total}, not 1")));
    }
    Ok(())
}

/// Acoustic signature of class `index`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassAcoustics {
    pub center_hz: f64,
    pub bandwidth_hz: f64,
    pub am_rate_hz: f64,
}

impl ClassAcoustics {
    pub fn for_class(index: usize, n_classes: usize, sample_rate_hz: u32, shift_hz: f64) -> Self {
        let nyquist = f64::from(sample_rate_hz) / 2.0;
        let lo = 900.0;
        let hi = nyquist * 0.8;
        let spacing = if n_classes > 1 {
            (hi - lo) / (n_classes - 1) as f64
        } else {
            0.0
        };
        Self {
            center_hz: (lo + spacing * index as f64 + shift_hz).clamp(700.0, nyquist - 300.0),
            bandwidth_hz: 300.0,
            am_rate_hz: 2.0 + 2.5 * index as f64,
        }
    }
}

fn largest_remainder(shares: &[(String, f64)], total: usize) -> Vec<usize> {
    let raw: Vec<f64> = shares.iter().map(|(_, s)| s * total as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&a, &b| {
        (raw[b] - raw[b].floor())
            .total_cmp(&(raw[a] - raw[a].floor()))
            .then(a.cmp(&b))
    });
    let missing = total - counts.iter().sum::<usize>();
    for &i in order.iter().take(missing) {
        counts[i] += 1;
    }
    counts
}

struct Plan {
    id: String,
    speaker: usize,
    class: usize,
    gender: Gender,
    f0: f64,
    gain: f64,
    n_samples: usize,
}

/// Renders one utterance. Deterministic in `(seed, index)`.
#[allow(clippy::too_many_arguments)]
pub fn synthesize_utterance(
    seed: u64,
    index: u64,
    acoustics: ClassAcoustics,
    f0: f64,
    gain: f64,
    n_samples: usize,
    sample_rate_hz: u32,
) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index + 1);
    let sr = f64::from(sample_rate_hz);
    const PARTIALS: usize = 16;
    let center = acoustics.center_hz + rng.random_range(-40.0..40.0);
    let partials: Vec<(f64, f64)> = (0..PARTIALS)
        .map(|_| {
            let f = center + acoustics.bandwidth_hz * (rng.random::<f64>() - 0.5);
            (f, rng.random_range(0.0..2.0 * PI))
        })
        .collect();
    let harmonics: Vec<(f64, f64)> = (1..)
        .map(|k| (k as f64 * f0, k as f64))
        .take_while(|(f, _)| *f < 650.0)
        .map(|(f, k)| (f, 1.0 / k))
        .collect();
    let am_phase = rng.random_range(0.0..2.0 * PI);
    let noise_amp = 0.18 * gain / (PARTIALS as f64).sqrt();
    let voice_amp = 0.12 * gain;
    (0..n_samples)
        .map(|n| {
            let t = n as f64 / sr;
            let am = 1.0 + 0.6 * (2.0 * PI * acoustics.am_rate_hz * t + am_phase).sin();
            let band: f64 = partials
                .iter()
                .map(|(f, ph)| (2.0 * PI * f * t + ph).sin())
                .sum();
            let voice: f64 = harmonics
                .iter()
                .map(|(f, a)| a * (2.0 * PI * f * t).sin())
                .sum();
            let hiss = 0.004 * (rng.random::<f64>() - 0.5);
            (noise_amp * am * band + voice_amp * voice + hiss).clamp(-0.99, 0.99) as f32
        })
        .collect()
}

/// Writes `<out_dir>/manifest.jsonl` and `<out_dir>/wav/<id>.wav`, returning the manifest.
pub fn generate_synthetic_corpus(
    cfg: &SynthConfig,
    out_dir: &Path,
) -> Result<CorpusManifest, CorpusError> {
    validate_shares(&cfg.class_shares)?;
    let (dmin, dmax) = cfg.duration_range_s;
    if !(0.3..=30.0).contains(&dmin) || !(0.3..=30.0).contains(&dmax) || dmin > dmax {
        return Err(CorpusError::Synth(format!(
            "duration range ({dmin}, {dmax}) must lie within [0.3, 30] s"
        )));
    }
    if !SUPPORTED_RATES.contains(&cfg.sample_rate_hz) {
        return Err(CorpusError::Synth(format!(
            "unsupported sample rate {}",
            cfg.sample_rate_hz
        )));
    }
    if cfg.n_speakers == 0 || cfg.segments_per_speaker == 0 {
        return Err(CorpusError::Synth(
            "need at least one speaker and one segment per speaker".into(),
        ));
    }
    let plans = plan(cfg);
    let n_classes = cfg.class_shares.len();
    let audio = map_range(ExecMode::default(), plans.len(), |i| {
        let p = &plans[i];
        let ac = ClassAcoustics::for_class(
            p.class,
            n_classes,
            cfg.sample_rate_hz,
            cfg.acoustic_shift_hz,
        );
        synthesize_utterance(
            cfg.seed,
            i as u64,
            ac,
            p.f0,
            p.gain,
            p.n_samples,
            cfg.sample_rate_hz,
        )
    });
    let wav_dir = out_dir.join("wav");
    fs::create_dir_all(&wav_dir).map_err(|e| CorpusError::Io {
        path: wav_dir.display().to_string(),
        reason: e.to_string(),
    })?;
    let mut records = Vec::with_capacity(plans.len());
    for (p, samples) in plans.iter().zip(audio) {
        let rel = format!("wav/{}.wav", p.id);
        let signal = AudioSignal::new(samples, cfg.sample_rate_hz, rel.clone())?;
        write_wav(out_dir.join(&rel), &signal)?;
        records.push(UtteranceRecord {
            id: p.id.clone(),
            audio_path: rel,
            speaker_id: format!("{}spk{:03}", cfg.id_prefix, p.speaker),
            gender: p.gender,
            emotion: cfg.class_shares[p.class].0.clone(),
            duration_s: p.n_samples as f64 / f64::from(cfg.sample_rate_hz),
            ann_a: None,
            ann_b: None,
        });
    }
    let mut manifest = CorpusManifest::new(records);
    manifest.write(out_dir.join("manifest.jsonl"))?;
    manifest.base_dir = Some(out_dir.to_path_buf());
    Ok(manifest)
}

fn plan(cfg: &SynthConfig) -> Vec<Plan> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let total = cfg.n_speakers * cfg.segments_per_speaker;
    let counts = largest_remainder(&cfg.class_shares, total);
    // deal labels round-robin so every sufficiently frequent class reaches every speaker
    let mut per_speaker: Vec<Vec<usize>> = vec![Vec::new(); cfg.n_speakers];
    let labels = counts
        .iter()
        .enumerate()
        .flat_map(|(c, &n)| std::iter::repeat_n(c, n));
    for (j, c) in labels.enumerate() {
        per_speaker[j % cfg.n_speakers].push(c);
    }
    let mut order: Vec<usize> = (0..cfg.n_speakers).collect();
    order.shuffle(&mut rng);
    let mut plans = Vec::with_capacity(total);
    for (s, classes) in per_speaker.iter_mut().enumerate() {
        classes.shuffle(&mut rng);
        let gender = if order[s].is_multiple_of(2) {
            Gender::M
        } else {
            Gender::F
        };
        let f0 = match gender {
            Gender::M => rng.random_range(95.0..135.0),
            Gender::F => rng.random_range(190.0..240.0),
        };
        let gain = rng.random_range(0.7..1.0);
        for (k, &class) in classes.iter().enumerate() {
            let dur = if cfg.duration_range_s.1 > cfg.duration_range_s.0 {
                rng.random_range(cfg.duration_range_s.0..=cfg.duration_range_s.1)
            } else {
                cfg.duration_range_s.0
            };
            plans.push(Plan {
                id: format!("{}s{:03}_{:04}", cfg.id_prefix, s, k),
                speaker: s,
                class,
                gender,
                f0,
                gain,
                n_samples: (dur * f64::from(cfg.sample_rate_hz)).round() as usize,
            });
        }
    }
    plans
}
