use ndarray::{Array2, ArrayView2};

use super::DspError;

/// Floor added inside the logarithm.
pub const LOG_EPSILON: f32 = 1e-10;

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// `n_mels + 2` edge frequencies equally spaced in Mel between 0 Hz and Nyquist.
/// Filter `m` has lower edge `edges[m]`, peak `edges[m+1]` and upper edge `edges[m+2]`.
pub fn mel_edges_hz(sample_rate_hz: u32, n_mels: usize) -> Vec<f64> {
    let top = hz_to_mel(f64::from(sample_rate_hz) / 2.0);
    (0..n_mels + 2)
        .map(|i| mel_to_hz(top * i as f64 / (n_mels + 1) as f64))
        .collect()
}

pub fn mel_centers_hz(sample_rate_hz: u32, n_mels: usize) -> Vec<f64> {
    let edges = mel_edges_hz(sample_rate_hz, n_mels);
    edges[1..=n_mels].to_vec()
}

/// Triangular Mel filterbank with unit peaks, `n_mels × (fft_size/2 + 1)`.
pub fn mel_filterbank(
    fft_size: usize,
    sample_rate_hz: u32,
    n_mels: usize,
) -> Result<Array2<f32>, DspError> {
    if n_mels < 2 {
        return Err(DspError::Config(format!(
            "n_mels must be >= 2, got {n_mels}"
        )));
    }
    if !fft_size.is_power_of_two() {
        return Err(DspError::Config(format!(
            "fft_size must be a power of two, got {fft_size}"
        )));
    }
    let bins = fft_size / 2 + 1;
    let edges = mel_edges_hz(sample_rate_hz, n_mels);
    let bin_hz = f64::from(sample_rate_hz) / fft_size as f64;
    let mut fb = Array2::<f32>::zeros((n_mels, bins));
    for m in 0..n_mels {
        let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        for k in 0..bins {
            let f = k as f64 * bin_hz;
            let w = if f > lo && f <= center {
                (f - lo) / (center - lo)
            } else if f > center && f < hi {
                (hi - f) / (hi - center)
            } else {
                0.0
            };
            fb[[m, k]] = w as f32;
        }
        if fb.row(m).iter().all(|&w| w == 0.0) {
            return Err(DspError::Config(format!(
                "mel filter {m} covers no FFT bin ({n_mels} filters on {bins} bins at {sample_rate_hz} Hz)"
            )));
        }
    }
    Ok(fb)
}

/// `out[t][m] = ln(Σ_k fb[m][k]·mag[t][k] + ε)`.
pub fn apply_log_mel(
    magnitudes: ArrayView2<f32>,
    filterbank: ArrayView2<f32>,
) -> Result<Array2<f32>, DspError> {
    if magnitudes.ncols() != filterbank.ncols() {
        return Err(DspError::Shape(format!(
            "magnitude bins {} != filterbank bins {}",
            magnitudes.ncols(),
            filterbank.ncols()
        )));
    }
    let energies = magnitudes.dot(&filterbank.t());
    Ok(energies.mapv(|e| (e + LOG_EPSILON).ln()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_and_row_sums() {
        let fb = mel_filterbank(512, 16000, 40).unwrap();
        assert_eq!(fb.dim(), (40, 257));
        for row in fb.rows() {
            assert!(row.sum() > 0.0);
            assert!(row.iter().all(|&w| w >= 0.0));
        }
        let fb8 = mel_filterbank(256, 8000, 40).unwrap();
        assert!(fb8.rows().into_iter().all(|r| r.sum() > 0.0));
    }

    #[test]
    fn filters_are_unimodal_and_centers_increase() {
        for (nfft, sr, n) in [
            (512, 16000, 40),
            (256, 8000, 40),
            (256, 8000, 24),
            (1024, 16000, 80),
        ] {
            let fb = mel_filterbank(nfft, sr, n).unwrap();
            for row in fb.rows() {
                let peak = row
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .unwrap()
                    .0;
                assert!(row
                    .iter()
                    .take(peak + 1)
                    .collect::<Vec<_>>()
                    .windows(2)
                    .all(|w| w[0] <= w[1]));
                assert!(row
                    .iter()
                    .skip(peak)
                    .collect::<Vec<_>>()
                    .windows(2)
                    .all(|w| w[0] >= w[1]));
            }
            let centers = mel_centers_hz(sr, n);
            assert!(centers.windows(2).all(|w| w[0] < w[1]));
            // every bin between the first and last center carries weight
            let bin_hz = sr as f64 / nfft as f64;
            for k in 0..fb.ncols() {
                let f = k as f64 * bin_hz;
                if f >= centers[0] && f <= centers[n - 1] {
                    assert!(fb.column(k).sum() > 0.0, "bin {k}");
                }
            }
        }
    }

    #[test]
    fn too_many_filters_is_a_config_error() {
        assert!(matches!(
            mel_filterbank(64, 8000, 60),
            Err(DspError::Config(_))
        ));
        assert!(matches!(
            mel_filterbank(500, 8000, 10),
            Err(DspError::Config(_))
        ));
        assert!(matches!(
            mel_filterbank(256, 8000, 1),
            Err(DspError::Config(_))
        ));
    }

    #[test]
    fn zero_magnitudes_hit_the_floor() {
        let fb = mel_filterbank(256, 8000, 40).unwrap();
        let mag = Array2::<f32>::zeros((5, 129));
        let out = apply_log_mel(mag.view(), fb.view()).unwrap();
        assert!(out.iter().all(|&v| v == LOG_EPSILON.ln()));
        assert!(apply_log_mel(Array2::<f32>::zeros((5, 128)).view(), fb.view()).is_err());
    }

    #[test]
    fn doubling_magnitudes_adds_at_most_ln2() {
        let fb = mel_filterbank(256, 8000, 40).unwrap();
        let mag = Array2::from_shape_fn((4, 129), |(t, k)| 0.05 + ((t * 7 + k * 13) % 11) as f32);
        let a = apply_log_mel(mag.view(), fb.view()).unwrap();
        let b = apply_log_mel((&mag * 2.0).view(), fb.view()).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            let d = (y - x) as f64;
            assert!(d > 0.0 && d <= std::f64::consts::LN_2 + 1e-6, "{d}");
        }
    }

    #[test]
    fn impulse_only_moves_overlapping_filters() {
        let fb = mel_filterbank(256, 8000, 40).unwrap();
        let bin = 60;
        let base = Array2::<f32>::zeros((1, 129));
        let mut imp = base.clone();
        imp[[0, bin]] = 1.0;
        let a = apply_log_mel(base.view(), fb.view()).unwrap();
        let b = apply_log_mel(imp.view(), fb.view()).unwrap();
        for m in 0..40 {
            let changed = a[[0, m]] != b[[0, m]];
            assert_eq!(changed, fb[[m, bin]] > 0.0, "filter {m}");
        }
    }
}
