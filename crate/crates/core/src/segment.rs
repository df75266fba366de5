//! Fixed-length sub-segmentation of per-utterance feature matrices.
//!
//! Windows slide along the frame timeline, so delta context computed on the full utterance
//! is preserved across sub-segment boundaries. The final window is zero-padded and records
//! how many of its rows are real frames.

use std::collections::BTreeMap;

use ndarray::{s, Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Gender;
use crate::dsp::{frame_count, StftConfig};

#[derive(Debug, Error, PartialEq)]
pub enum SegmentError {
    #[error("segment {0} has no frames")]
    Empty(String),
    #[error("invalid chop configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChopConfig {
    pub window_s: f64,
    pub overlap_s: f64,
    pub frame_hop_s: f64,
}

impl Default for ChopConfig {
    fn default() -> Self {
        Self {
            window_s: 3.0,
            overlap_s: 1.0,
            frame_hop_s: 0.010,
        }
    }
}

impl ChopConfig {
    pub fn validate(&self) -> Result<(), SegmentError> {
        if !(self.overlap_s >= 0.0 && self.overlap_s < self.window_s && self.frame_hop_s > 0.0) {
            return Err(SegmentError::Config(format!(
                "need 0 <= overlap_s < window_s and frame_hop_s > 0 (window {}, overlap {}, hop {})",
                self.window_s, self.overlap_s, self.frame_hop_s
            )));
        }
        if self.hop_frames() == 0 {
            return Err(SegmentError::Config(
                "window hop rounds to zero frames".into(),
            ));
        }
        Ok(())
    }

    pub fn window_frames(&self) -> usize {
        (self.window_s / self.frame_hop_s).round() as usize
    }

    pub fn hop_frames(&self) -> usize {
        ((self.window_s - self.overlap_s) / self.frame_hop_s).round() as usize
    }

    /// `1` if `frames <= window`, else `ceil((frames − window) / hop) + 1`.
    pub fn count(&self, frames: usize) -> usize {
        let (w, h) = (self.window_frames(), self.hop_frames());
        if frames <= w {
            1
        } else {
            (frames - w).div_ceil(h) + 1
        }
    }
}

/// Labels a sub-segment inherits from its parent segment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentLabels {
    pub segment_id: String,
    pub speaker_id: String,
    pub emotion: usize,
    pub gender: Gender,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubSegment {
    /// `window_frames × D`; rows at and beyond `valid_frames` are exactly zero.
    pub values: Array2<f32>,
    pub valid_frames: usize,
    /// First source frame covered.
    pub offset: usize,
    pub labels: SegmentLabels,
}

pub fn chop(
    features: ArrayView2<f32>,
    labels: &SegmentLabels,
    cfg: &ChopConfig,
) -> Result<Vec<SubSegment>, SegmentError> {
    cfg.validate()?;
    let (frames, dims) = features.dim();
    if frames == 0 {
        return Err(SegmentError::Empty(labels.segment_id.clone()));
    }
    let (w, h) = (cfg.window_frames(), cfg.hop_frames());
    Ok((0..cfg.count(frames))
        .map(|i| {
            let offset = i * h;
            let valid = w.min(frames - offset);
            let mut values = Array2::<f32>::zeros((w, dims));
            values
                .slice_mut(s![..valid, ..])
                .assign(&features.slice(s![offset..offset + valid, ..]));
            SubSegment {
                values,
                valid_frames: valid,
                offset,
                labels: labels.clone(),
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub segments: usize,
    pub subsegments: usize,
}

/// Frames produced by the front end for a segment of `duration_s` seconds.
pub fn frames_for_duration(duration_s: f64, sample_rate_hz: u32, stft: &StftConfig) -> usize {
    let len = (duration_s * f64::from(sample_rate_hz)).round() as usize;
    frame_count(
        len,
        stft.win_samples(sample_rate_hz),
        stft.hop_samples(sample_rate_hz),
    )
    .unwrap_or(0)
}

/// Per-class segment and sub-segment counts for `(class, duration)` pairs.
pub fn count_subsegments<'a>(
    segments: impl IntoIterator<Item = (&'a str, f64)>,
    cfg: &ChopConfig,
    stft: &StftConfig,
    sample_rate_hz: u32,
) -> BTreeMap<String, Tally> {
    let mut out: BTreeMap<String, Tally> = BTreeMap::new();
    for (class, dur) in segments {
        let frames = frames_for_duration(dur, sample_rate_hz, stft).max(1);
        let t = out.entry(class.to_string()).or_default();
        t.segments += 1;
        t.subsegments += cfg.count(frames);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn labels() -> SegmentLabels {
        SegmentLabels {
            segment_id: "seg".into(),
            speaker_id: "spk".into(),
            emotion: 2,
            gender: Gender::F,
        }
    }

    fn ramp(frames: usize, dims: usize) -> Array2<f32> {
        Array2::from_shape_fn((frames, dims), |(t, d)| (t * dims + d) as f32 + 1.0)
    }

    #[test]
    fn default_window_geometry() {
        let c = ChopConfig::default();
        assert_eq!((c.window_frames(), c.hop_frames()), (300, 200));
    }

    #[test]
    fn exact_fit() {
        let subs = chop(ramp(300, 3).view(), &labels(), &ChopConfig::default()).unwrap();
        assert_eq!(subs.len(), 1);
        assert_eq!(subs[0].valid_frames, 300);
    }

    #[test]
    fn five_hundred_frames() {
        let subs = chop(ramp(500, 2).view(), &labels(), &ChopConfig::default()).unwrap();
        assert_eq!(subs.len(), 2);
        assert_eq!((subs[0].offset, subs[0].valid_frames), (0, 300));
        assert_eq!((subs[1].offset, subs[1].valid_frames), (200, 300));
    }

    #[test]
    fn short_segment_is_padded() {
        let subs = chop(ramp(150, 4).view(), &labels(), &ChopConfig::default()).unwrap();
        assert_eq!(subs.len(), 1);
        assert_eq!(subs[0].valid_frames, 150);
        assert!(subs[0]
            .values
            .slice(s![150.., ..])
            .iter()
            .all(|v| v.to_bits() == 0));
        assert_eq!(subs[0].labels, labels());
    }

    #[test]
    fn empty_is_an_error() {
        let e = chop(
            Array2::<f32>::zeros((0, 3)).view(),
            &labels(),
            &ChopConfig::default(),
        );
        assert_eq!(e.unwrap_err(), SegmentError::Empty("seg".into()));
    }

    #[test]
    fn tallies() {
        let stft = StftConfig::default();
        let cfg = ChopConfig::default();
        assert_eq!(frames_for_duration(4.4, 16000, &stft), 438);
        assert_eq!(frames_for_duration(7.0, 8000, &stft), 698);
        let t = count_subsegments(
            std::iter::repeat(("anger", 4.4)).take(289),
            &cfg,
            &stft,
            16000,
        );
        assert_eq!(
            t["anger"],
            Tally {
                segments: 289,
                subsegments: 578
            }
        );
        let t = count_subsegments([("x", 7.0)], &cfg, &stft, 8000);
        assert_eq!(t["x"].subsegments, 3);
        let short = [("a", 0.5), ("a", 2.9), ("b", 3.0), ("b", 1.0)];
        let t = count_subsegments(short, &cfg, &stft, 8000);
        assert!(t.values().all(|t| t.segments == t.subsegments));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(500))]
        #[test]
        fn matches_sliding_window_enumeration(frames in 1usize..2000) {
            let cfg = ChopConfig::default();
            let x = ramp(frames, 2);
            let subs = chop(x.view(), &labels(), &cfg).unwrap();
            let mut expected = vec![];
            let mut start = 0;
            loop {
                expected.push((start, 300.min(frames - start)));
                if start + 300 >= frames { break; }
                start += 200;
            }
            let got: Vec<_> = subs.iter().map(|s| (s.offset, s.valid_frames)).collect();
            prop_assert_eq!(&got, &expected);
            prop_assert_eq!(subs.len(), cfg.count(frames));
            // reconstruction from non-overlapped portions
            let mut rebuilt: Vec<f32> = vec![];
            for (i, sub) in subs.iter().enumerate() {
                let from = if i == 0 { 0 } else { 100 };
                prop_assert!(sub.valid_frames > from);
                rebuilt.extend(sub.values.slice(s![from..sub.valid_frames, ..]).iter());
                prop_assert!(sub.values.slice(s![sub.valid_frames.., ..]).iter().all(|v| v.to_bits() == 0));
            }
            prop_assert_eq!(rebuilt, x.iter().copied().collect::<Vec<_>>());
        }
    }
}
