use std::f64::consts::PI;

use ndarray::Array2;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use super::{AudioSignal, DspError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    /// Periodic Hann window, `0.5 - 0.5 cos(2πn/N)`.
    Hann,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StftConfig {
    pub window_ms: f64,
    pub hop_ms: f64,
    pub window_kind: WindowKind,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            window_ms: 25.0,
            hop_ms: 10.0,
            window_kind: WindowKind::Hann,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<(), DspError> {
        if !(self.hop_ms > 0.0 && self.window_ms > self.hop_ms) {
            return Err(DspError::Config(format!(
                "need window_ms > hop_ms > 0, got window {} hop {}",
                self.window_ms, self.hop_ms
            )));
        }
        Ok(())
    }

    pub fn win_samples(&self, sample_rate_hz: u32) -> usize {
        (f64::from(sample_rate_hz) * self.window_ms / 1000.0).round() as usize
    }

    pub fn hop_samples(&self, sample_rate_hz: u32) -> usize {
        (f64::from(sample_rate_hz) * self.hop_ms / 1000.0).round() as usize
    }

    /// Smallest power of two holding one window.
    pub fn fft_size(&self, sample_rate_hz: u32) -> usize {
        self.win_samples(sample_rate_hz).next_power_of_two()
    }

    pub fn frame_hop_s(&self) -> f64 {
        self.hop_ms / 1000.0
    }
}

/// `floor((len - win) / hop) + 1`, or `None` when the signal is shorter than one window.
pub fn frame_count(len: usize, win: usize, hop: usize) -> Option<usize> {
    (len >= win && hop > 0).then(|| (len - win) / hop + 1)
}

pub fn window(kind: WindowKind, len: usize) -> Vec<f32> {
    match kind {
        WindowKind::Hann => (0..len)
            .map(|n| (0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos()) as f32)
            .collect(),
    }
}

/// Magnitude spectrogram, `frames × (fft_size/2 + 1)`.
///
/// Frame `t` covers samples `[t·hop, t·hop + win)`; each windowed frame is zero-padded
/// to `fft_size` before the transform.
pub fn stft_magnitude(signal: &AudioSignal, cfg: &StftConfig) -> Result<Array2<f32>, DspError> {
    cfg.validate()?;
    let sr = signal.sample_rate_hz;
    let (win, hop, nfft) = (cfg.win_samples(sr), cfg.hop_samples(sr), cfg.fft_size(sr));
    let frames = frame_count(signal.samples.len(), win, hop).ok_or_else(|| DspError::TooShort {
        path: signal.source_path.clone(),
        samples: signal.samples.len(),
        window: win,
    })?;
    let taper = window(cfg.window_kind, win);
    let bins = nfft / 2 + 1;
    let fft = FftPlanner::<f32>::new().plan_fft_forward(nfft);
    let mut buf = vec![Complex::new(0.0f32, 0.0); nfft];
    let mut scratch = vec![Complex::new(0.0f32, 0.0); fft.get_inplace_scratch_len()];
    let mut out = Array2::<f32>::zeros((frames, bins));
    for (t, mut row) in out.rows_mut().into_iter().enumerate() {
        let frame = &signal.samples[t * hop..t * hop + win];
        for (slot, (&x, &w)) in buf.iter_mut().zip(frame.iter().zip(&taper)) {
            *slot = Complex::new(x * w, 0.0);
        }
        buf[win..].fill(Complex::new(0.0, 0.0));
        fft.process_with_scratch(&mut buf, &mut scratch);
        for (o, c) in row.iter_mut().zip(&buf[..bins]) {
            *o = c.norm();
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn signal(samples: Vec<f32>, sr: u32) -> AudioSignal {
        AudioSignal::new(samples, sr, "mem").unwrap()
    }

    #[test]
    fn default_sizes() {
        let cfg = StftConfig::default();
        assert_eq!((cfg.win_samples(16000), cfg.hop_samples(16000)), (400, 160));
        assert_eq!((cfg.win_samples(8000), cfg.hop_samples(8000)), (200, 80));
        assert_eq!(cfg.fft_size(16000), 512);
        assert_eq!(cfg.fft_size(8000), 256);
    }

    #[test]
    fn three_seconds_gives_298_frames() {
        let cfg = StftConfig::default();
        for sr in [8000, 16000] {
            let s = signal(vec![0.0; 3 * sr as usize], sr);
            let m = stft_magnitude(&s, &cfg).unwrap();
            assert_eq!(m.dim(), (298, cfg.fft_size(sr) / 2 + 1));
            assert!(m.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn shorter_than_window_is_rejected() {
        let s = signal(vec![0.1; 199], 8000);
        assert!(matches!(
            stft_magnitude(&s, &StftConfig::default()),
            Err(DspError::TooShort {
                samples: 199,
                window: 200,
                ..
            })
        ));
    }

    #[test]
    fn bin_centered_sinusoid_peaks_at_its_bin() {
        let cfg = StftConfig::default();
        let sr = 16000;
        let nfft = cfg.fft_size(sr);
        let bin = 37;
        let f = bin as f64 * sr as f64 / nfft as f64;
        let samples: Vec<f32> = (0..8000)
            .map(|n| (0.5 * (2.0 * PI * f * n as f64 / sr as f64).sin()) as f32)
            .collect();
        let s = signal(samples.clone(), sr);
        let mag = stft_magnitude(&s, &cfg).unwrap();
        let win = cfg.win_samples(sr);
        let hop = cfg.hop_samples(sr);
        let taper = window(WindowKind::Hann, win);
        for (t, row) in mag.rows().into_iter().enumerate() {
            let peak = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0;
            assert_eq!(peak, bin, "frame {t}");
            // direct DFT summation at the peak bin
            let (mut re, mut im) = (0.0f64, 0.0f64);
            for n in 0..win {
                let x = samples[t * hop + n] as f64 * taper[n] as f64;
                let ang = -2.0 * PI * (bin * n) as f64 / nfft as f64;
                re += x * ang.cos();
                im += x * ang.sin();
            }
            let direct = (re * re + im * im).sqrt();
            assert!((direct - row[bin] as f64).abs() < 1e-3 * direct.max(1.0));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn frame_count_matches_sliding_enumeration(dur_ms in 25u32..3000, rate_sel in 0usize..2) {
            let sr = SUPPORTED_RATES_LOCAL[rate_sel];
            let cfg = StftConfig::default();
            let len = (sr as usize * dur_ms as usize) / 1000;
            let (win, hop) = (cfg.win_samples(sr), cfg.hop_samples(sr));
            let mut brute = 0;
            let mut start = 0;
            while start + win <= len {
                brute += 1;
                start += hop;
            }
            let expected = if brute == 0 { None } else { Some(brute) };
            prop_assert_eq!(frame_count(len, win, hop), expected);
        }
    }

    const SUPPORTED_RATES_LOCAL: [u32; 2] = super::super::SUPPORTED_RATES;
}
