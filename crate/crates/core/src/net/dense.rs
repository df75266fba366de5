use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{axpy, dot, NetError, Scalar};

/// `y = W x + b` with `W` laid out `[out][in]`. Inputs at positions `>= active` are known
/// to be zero and skipped.
pub fn dense_forward<F: Scalar>(
    weight: &[F],
    bias: &[F],
    x: &[F],
    active: usize,
) -> Result<Vec<F>, NetError> {
    let n_in = x.len();
    if n_in == 0 || weight.len() != bias.len() * n_in || active > n_in {
        return Err(NetError::Shape(format!(
            "dense weight {} / bias {} / input {}",
            weight.len(),
            bias.len(),
            n_in
        )));
    }
    Ok(bias
        .iter()
        .enumerate()
        .map(|(o, b)| *b + dot(&weight[o * n_in..o * n_in + active], &x[..active]))
        .collect())
}

/// Accumulates `dW`, `db` and returns `dx` (zero beyond `active`).
pub fn dense_backward<F: Scalar>(
    weight: &[F],
    x: &[F],
    active: usize,
    dy: &[F],
    d_weight: &mut [F],
    d_bias: &mut [F],
) -> Vec<F> {
    let n_in = x.len();
    let mut dx = vec![F::zero(); n_in];
    for (o, &g) in dy.iter().enumerate() {
        if g.is_zero() {
            continue;
        }
        d_bias[o] = d_bias[o] + g;
        axpy(g, &x[..active], &mut d_weight[o * n_in..o * n_in + active]);
        axpy(g, &weight[o * n_in..o * n_in + active], &mut dx[..active]);
    }
    dx
}

pub fn relu_forward<F: Scalar>(x: &mut [F]) {
    for v in x {
        *v = v.max(F::zero());
    }
}

/// Zeroes `dy` where the forward output was not positive.
pub fn relu_backward<F: Scalar>(y: &[F], dy: &mut [F]) {
    for (g, v) in dy.iter_mut().zip(y) {
        if *v <= F::zero() {
            *g = F::zero();
        }
    }
}

/// Inverted-dropout multipliers: each unit is kept with probability `1 − rate` and scaled by
/// `1 / (1 − rate)`.
pub fn dropout_mask<F: Scalar>(rate: f64, seed: u64, n: usize) -> Vec<F> {
    if rate <= 0.0 {
        return vec![F::one(); n];
    }
    let keep = F::of(1.0 / (1.0 - rate));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            if rng.random::<f64>() < rate {
                F::zero()
            } else {
                keep
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::rel_err;

    #[test]
    fn relu_values() {
        let mut x = [-3.0f64, 3.0, 0.0];
        relu_forward(&mut x);
        assert_eq!(x, [0.0, 3.0, 0.0]);
        let mut g = [1.0, 1.0, 1.0];
        relu_backward(&x, &mut g);
        assert_eq!(g, [0.0, 1.0, 0.0]);
    }

    #[test]
    fn identity_dense() {
        let w = [1.0f64, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        let x = [0.3, -2.0, 7.5];
        assert_eq!(dense_forward(&w, &[0.0; 3], &x, 3).unwrap(), x.to_vec());
        assert!(dense_forward(&w, &[0.0; 2], &x, 3).is_err());
    }

    #[test]
    fn dense_gradient_matches_differences() {
        let w: Vec<f64> = (0..12).map(|i| ((i * 7 % 5) as f64 - 2.0) * 0.3).collect();
        let b = vec![0.1, -0.2, 0.3];
        let x = vec![0.5, -1.0, 2.0, 0.25];
        let r = [1.0, -2.0, 0.5];
        let loss = |w: &[f64], x: &[f64]| {
            dense_forward(w, &b, x, 4)
                .unwrap()
                .iter()
                .zip(&r)
                .map(|(a, c)| a * c)
                .sum::<f64>()
        };
        let mut dw = vec![0.0; 12];
        let mut db = vec![0.0; 3];
        let dx = dense_backward(&w, &x, 4, &r, &mut dw, &mut db);
        let eps = 1e-5;
        for i in 0..12 {
            let (mut a, mut c) = (w.clone(), w.clone());
            a[i] += eps;
            c[i] -= eps;
            assert!(rel_err(dw[i], (loss(&a, &x) - loss(&c, &x)) / (2.0 * eps)) < 1e-8);
        }
        for i in 0..4 {
            let (mut a, mut c) = (x.clone(), x.clone());
            a[i] += eps;
            c[i] -= eps;
            assert!(rel_err(dx[i], (loss(&w, &a) - loss(&w, &c)) / (2.0 * eps)) < 1e-8);
        }
        assert_eq!(db, r.to_vec());
    }

    #[test]
    fn zero_rate_is_identity() {
        assert!(dropout_mask::<f32>(0.0, 3, 50).iter().all(|m| *m == 1.0));
    }

    #[test]
    fn dropout_expectation_is_one() {
        let draws = 10_000;
        let mean: f64 = (0..draws)
            .map(|s| dropout_mask::<f64>(0.5, s, 1)[0])
            .sum::<f64>()
            / draws as f64;
        // Each draw is 0 or 2: σ = 1, so the standard error of the mean is 1/√n.
        let se = 1.0 / (draws as f64).sqrt();
        assert!((mean - 1.0).abs() <= 3.0 * se, "mean {mean}");
    }
}
