use ndarray::{Array2, ArrayView2};

/// Regression deltas along time:
/// `Δ[t] = Σ_{n=1..N} n·(x[t+n] − x[t−n]) / (2·Σ n²)`, with frames outside `[0, T)`
/// replaced by the nearest edge frame.
pub fn compute_deltas(features: ArrayView2<f32>, window_n: usize) -> Array2<f32> {
    let (frames, dims) = features.dim();
    let mut out = Array2::<f32>::zeros((frames, dims));
    if frames == 0 || window_n == 0 {
        return out;
    }
    let denom = 2.0 * (1..=window_n).map(|n| (n * n) as f64).sum::<f64>();
    let last = frames as isize - 1;
    let at = |t: isize| t.clamp(0, last) as usize;
    for t in 0..frames as isize {
        for d in 0..dims {
            let mut acc = 0.0f64;
            for n in 1..=window_n as isize {
                let ahead = features[[at(t + n), d]] as f64;
                let behind = features[[at(t - n), d]] as f64;
                acc += n as f64 * (ahead - behind);
            }
            out[[t as usize, d]] = (acc / denom) as f32;
        }
    }
    out
}
