use ndarray::{concatenate, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::{
    apply_log_mel, compute_deltas, mel_filterbank, stft_magnitude, AudioSignal, DspError,
    StftConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub stft: StftConfig,
    pub n_mels: usize,
    pub use_deltas: bool,
    pub delta_window: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            stft: StftConfig::default(),
            n_mels: 40,
            use_deltas: true,
            delta_window: 2,
        }
    }
}

impl FeatureConfig {
    pub fn dims(&self) -> usize {
        if self.use_deltas {
            3 * self.n_mels
        } else {
            self.n_mels
        }
    }
}

/// Time × feature grid. With deltas, columns are laid out as `[mel | Δ | ΔΔ₂]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub values: Array2<f32>,
    pub n_mels: usize,
    pub frame_hop_s: f64,
}

impl FeatureMatrix {
    pub fn frames(&self) -> usize {
        self.values.nrows()
    }

    pub fn dims(&self) -> usize {
        self.values.ncols()
    }
}

/// Concatenates optional delta orders onto a log-Mel grid and applies z-normalization when
/// statistics are supplied.
pub fn assemble_features(
    log_mel: ArrayView2<f32>,
    use_deltas: bool,
    delta_window: usize,
    stats: Option<&NormStats>,
) -> Result<Array2<f32>, DspError> {
    if log_mel.iter().any(|v| !v.is_finite()) {
        return Err(DspError::Shape(
            "log-Mel grid contains non-finite values".into(),
        ));
    }
    let mut values = if use_deltas {
        let d1 = compute_deltas(log_mel, delta_window);
        let d2 = compute_deltas(d1.view(), delta_window);
        concatenate(Axis(1), &[log_mel, d1.view(), d2.view()])
            .map_err(|e| DspError::Shape(e.to_string()))?
    } else {
        log_mel.to_owned()
    };
    if let Some(stats) = stats {
        stats.apply(&mut values)?;
    }
    Ok(values)
}

/// Full front end for one utterance; output is not normalized.
pub fn featurize(signal: &AudioSignal, cfg: &FeatureConfig) -> Result<FeatureMatrix, DspError> {
    let mag = stft_magnitude(signal, &cfg.stft)?;
    let fb = mel_filterbank(
        cfg.stft.fft_size(signal.sample_rate_hz),
        signal.sample_rate_hz,
        cfg.n_mels,
    )?;
    let log_mel = apply_log_mel(mag.view(), fb.view())?;
    let values = assemble_features(log_mel.view(), cfg.use_deltas, cfg.delta_window, None)?;
    Ok(FeatureMatrix {
        values,
        n_mels: cfg.n_mels,
        frame_hop_s: cfg.stft.frame_hop_s(),
    })
}

/// Per-dimension mean and standard deviation, estimated on training frames only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    /// Two-pass estimate over every frame of `matrices`.
    pub fn fit(matrices: &[ArrayView2<'_, f32>]) -> Result<Self, DspError> {
        let dims = matrices.first().map_or(0, |m| m.ncols());
        if let Some(m) = matrices.iter().find(|m| m.ncols() != dims) {
            return Err(DspError::Shape(format!(
                "feature width {} != {dims}",
                m.ncols()
            )));
        }
        let n: usize = matrices.iter().map(|m| m.nrows()).sum();
        if n == 0 {
            return Err(DspError::Shape(
                "no frames to estimate normalization from".into(),
            ));
        }
        let mut mean = vec![0.0f64; dims];
        for row in matrices.iter().flat_map(|m| m.rows()) {
            for (acc, &v) in mean.iter_mut().zip(row.iter()) {
                *acc += v as f64;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0f64; dims];
        for row in matrices.iter().flat_map(|m| m.rows()) {
            for ((acc, &v), mu) in var.iter_mut().zip(row.iter()).zip(&mean) {
                *acc += (v as f64 - mu).powi(2);
            }
        }
        let std = var.into_iter().map(|v| (v / n as f64).sqrt()).collect();
        Ok(Self { mean, std })
    }

    pub fn dims(&self) -> usize {
        self.mean.len()
    }

    /// In-place `(x − mean) / std`; a zero std is replaced by 1.
    pub fn apply(&self, values: &mut Array2<f32>) -> Result<(), DspError> {
        if values.ncols() != self.dims() {
            return Err(DspError::Shape(format!(
                "feature width {} != normalization width {}",
                values.ncols(),
                self.dims()
            )));
        }
        for mut row in values.rows_mut() {
            for (d, v) in row.iter_mut().enumerate() {
                let sd = if self.std[d] > 0.0 { self.std[d] } else { 1.0 };
                *v = ((*v as f64 - self.mean[d]) / sd) as f32;
            }
        }
        Ok(())
    }
}
