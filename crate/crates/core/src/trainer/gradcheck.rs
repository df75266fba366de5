use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::exec::ExecMode;
use crate::net::{
    bilstm_backward, bilstm_forward, conv_backward, conv_forward, dense_backward, dense_forward,
    pool_backward, pool_forward, rel_err, relu_backward, relu_forward, sample_seed,
    softmax_cross_entropy, Activation, ConvSpec, LstmWeights, ModelSpec, Network, PoolSpec,
    SampleRef, Shape2D, StageSpec, Targets,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckOptions {
    pub batch: usize,
    pub height: usize,
    pub width: usize,
    pub step: f64,
    pub threshold: f64,
    /// Inputs whose ReLU pre-activations or pooling maxima lie this close to a kink are
    /// redrawn.
    pub kink_tolerance: f64,
    /// Test hook: doubles the analytic gradient of the named tensor.
    pub corrupt: Option<String>,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self {
            batch: 2,
            height: 12,
            width: 9,
            step: 1e-5,
            threshold: 1e-4,
            kink_tolerance: 1e-3,
            corrupt: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckEntry {
    pub layer: String,
    pub tensor: String,
    pub checked: usize,
    pub max_rel_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub entries: Vec<GradcheckEntry>,
    pub max_rel_err: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl GradcheckReport {
    fn from_entries(entries: Vec<GradcheckEntry>, threshold: f64) -> Self {
        let max_rel_err = entries.iter().map(|e| e.max_rel_err).fold(0.0, f64::max);
        Self {
            entries,
            max_rel_err,
            threshold,
            passed: max_rel_err <= threshold,
        }
    }

    pub fn merge(mut self, other: GradcheckReport) -> Self {
        self.entries.extend(other.entries);
        Self::from_entries(self.entries, self.threshold.min(other.threshold))
    }
}

/// A model touching every layer type: 2D conv, time pooling, temporal conv, BiLSTM with
/// dropout, a dense trunk and both heads.
pub fn tiny_model_spec(multitask: bool) -> ModelSpec {
    ModelSpec {
        conv_stack: vec![
            StageSpec::Conv(ConvSpec::two_d(3, 1, 1, 2)),
            StageSpec::MaxPool(PoolSpec {
                kernel: 2,
                stride: 2,
            }),
            StageSpec::Conv(ConvSpec::temporal(3, 1, 0, 3)),
        ],
        recurrent_hidden: 3,
        recurrent_dropout: 0.5,
        dense_hidden: vec![5],
        emotion_classes: 3,
        multitask,
    }
}

/// Central differences on every parameter of the assembled model, batch-mean loss in f64.
pub fn gradcheck(
    spec: &ModelSpec,
    seed: u64,
    opts: &GradcheckOptions,
) -> Result<GradcheckReport, TrainError> {
    let input = Shape2D::new(opts.height, opts.width);
    let net = Network::<f64>::new(spec.clone(), input, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x4743);
    let dropout = Some(seed);
    let n = opts.height * opts.width;
    let mut samples = Vec::with_capacity(opts.batch);
    for i in 0..opts.batch {
        let valid = if i % 2 == 0 {
            opts.height
        } else {
            (opts.height * 3 / 4).max(1)
        };
        let targets = Targets {
            emotion: rng.random_range(0..spec.emotion_classes),
            gender: spec.multitask.then(|| rng.random_range(0..2)),
        };
        let mut x: Vec<f32> = Vec::new();
        for _ in 0..200 {
            x = (0..n).map(|_| rng.random_range(-1.0f32..1.0)).collect();
            let wide: Vec<f64> = x.iter().map(|v| *v as f64).collect();
            if net.kink_margin(&wide, valid, dropout.map(|d| sample_seed(d, i)))?
                > opts.kink_tolerance
            {
                break;
            }
        }
        samples.push((x, valid, targets));
    }
    let refs: Vec<SampleRef> = samples
        .iter()
        .map(|(x, v, t)| SampleRef {
            features: x,
            valid: *v,
            targets: *t,
        })
        .collect();
    let (_, mut grads) = net.batch_gradients(&refs, dropout, ExecMode::Sequential)?;
    if let Some(name) = &opts.corrupt {
        if let Some(i) = net.params.index_of(name) {
            for g in &mut grads.slots[i] {
                *g *= 2.0;
            }
        }
    }
    let wide: Vec<Vec<f64>> = samples
        .iter()
        .map(|(x, _, _)| x.iter().map(|v| *v as f64).collect())
        .collect();
    let loss = |p: &Network<f64>| -> Result<f64, TrainError> {
        let mut total = 0.0;
        for (i, (_, v, t)) in samples.iter().enumerate() {
            total += p
                .sample_loss(&wide[i], *v, *t, dropout.map(|d| sample_seed(d, i)))?
                .total;
        }
        Ok(total / samples.len() as f64)
    };
    let mut probe = net.clone();
    let mut entries = Vec::new();
    for (ti, t) in net.params.tensors.iter().enumerate() {
        let mut worst = 0.0f64;
        for e in 0..t.len() {
            let orig = t.value[e];
            probe.params.tensors[ti].value[e] = orig + opts.step;
            let up = loss(&probe)?;
            probe.params.tensors[ti].value[e] = orig - opts.step;
            let down = loss(&probe)?;
            probe.params.tensors[ti].value[e] = orig;
            worst = worst.max(rel_err(grads.slots[ti][e], (up - down) / (2.0 * opts.step)));
        }
        entries.push(GradcheckEntry {
            layer: t.name.split('.').next().unwrap_or(&t.name).to_string(),
            tensor: t.name.clone(),
            checked: t.len(),
            max_rel_err: worst,
        });
    }
    Ok(GradcheckReport::from_entries(entries, opts.threshold))
}

/// Compares `analytic(θ).1` with central differences of `analytic(θ).0`.
fn check<L>(layer: &str, theta: &[f64], step: f64, f: L) -> Result<GradcheckEntry, TrainError>
where
    L: Fn(&[f64]) -> Result<(f64, Vec<f64>), TrainError>,
{
    let (_, g) = f(theta)?;
    let mut worst = 0.0f64;
    let mut p = theta.to_vec();
    for i in 0..theta.len() {
        p[i] = theta[i] + step;
        let up = f(&p)?.0;
        p[i] = theta[i] - step;
        let down = f(&p)?.0;
        p[i] = theta[i];
        worst = worst.max(rel_err(g[i], (up - down) / (2.0 * step)));
    }
    Ok(GradcheckEntry {
        layer: layer.to_string(),
        tensor: "inputs+parameters".to_string(),
        checked: theta.len(),
        max_rel_err: worst,
    })
}

fn uniform(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn weighted_sum(y: &[f64], r: &[f64]) -> f64 {
    y.iter().zip(r).map(|(a, b)| a * b).sum()
}

/// Each layer type in isolation under a random linear readout `Σ r ⊙ output`.
pub fn gradcheck_layers(seed: u64, opts: &GradcheckOptions) -> Result<GradcheckReport, TrainError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, w, step) = (opts.height, opts.width, opts.step);
    let mut entries = Vec::new();

    for (name, spec, ci) in [
        ("temporal_conv", ConvSpec::temporal(3, 2, 1, 3), 1),
        ("conv2d", ConvSpec::two_d(3, 2, 1, 2), 2),
    ] {
        let shape = Shape2D::new(h, w);
        let rc = spec.resolve(shape, ci)?;
        let out = rc.output(shape)?;
        let (nx, nw, nb) = (h * w * ci, rc.weight_len(), rc.out_channels);
        let r = uniform(&mut rng, out.height * out.width * rc.out_channels);
        let theta = uniform(&mut rng, nx + nw + nb);
        let valid = h - 2;
        entries.push(check(name, &theta, step, |t: &[f64]| {
            let x = Activation::from_vec(h, w, ci, t[..nx].to_vec())?;
            let (wt, b) = (&t[nx..nx + nw], &t[nx + nw..]);
            let (y, v) = conv_forward(&x, valid, &rc, wt, b)?;
            let dy = Activation::from_vec(out.height, out.width, rc.out_channels, r.clone())?;
            let (mut dw, mut db, mut dx) =
                (vec![0.0; nw], vec![0.0; nb], Activation::zeros(h, w, ci));
            conv_backward(&x, valid, &rc, wt, &dy, v, &mut dw, &mut db, Some(&mut dx))?;
            Ok((weighted_sum(&y.data, &r), [dx.data, dw, db].concat()))
        })?);
    }

    {
        let spec = PoolSpec {
            kernel: 2,
            stride: 2,
        };
        // Distinct, well-separated values keep every window away from a tie.
        let mut theta: Vec<f64> = (0..h * w).map(|i| i as f64 * 0.01).collect();
        for i in (1..theta.len()).rev() {
            theta.swap(i, rng.random_range(0..=i));
        }
        let r = uniform(&mut rng, (h / 2) * w);
        entries.push(check("max_pool", &theta, step, |t: &[f64]| {
            let x = Activation::from_vec(h, w, 1, t.to_vec())?;
            let (y, _, cache) = pool_forward(&x, h, &spec)?;
            let dy = Activation::from_vec(y.height, w, 1, r.clone())?;
            Ok((weighted_sum(&y.data, &r), pool_backward(&dy, &cache).data))
        })?);
    }

    {
        let (f_in, hid, valid) = (w, 3, h * 3 / 4);
        let (nx, nih, nhh, nb) = (h * f_in, 4 * hid * f_in, 4 * hid * hid, 4 * hid);
        let per_dir = nih + nhh + nb;
        let theta = uniform(&mut rng, nx + 2 * per_dir);
        let r = uniform(&mut rng, h * 2 * hid);
        entries.push(check("bilstm", &theta, step, |t: &[f64]| {
            let x = &t[..nx];
            let dir = |k: usize| {
                let s = &t[nx + k * per_dir..nx + (k + 1) * per_dir];
                LstmWeights {
                    w_ih: &s[..nih],
                    w_hh: &s[nih..nih + nhh],
                    b: &s[nih + nhh..],
                }
            };
            let (fw, bw) = (dir(0), dir(1));
            let (y, cache) = bilstm_forward(x, h, f_in, valid, hid, &fw, &bw)?;
            let g = bilstm_backward(x, &cache, &fw, &bw, &r)?;
            let grad = [g.d_input, g.fwd.concat(), g.bwd.concat()].concat();
            Ok((weighted_sum(&y, &r), grad))
        })?);
    }

    {
        let (n_in, n_out) = (w, 4);
        let theta = uniform(&mut rng, n_in + n_in * n_out + n_out);
        let r = uniform(&mut rng, n_out);
        entries.push(check("dense", &theta, step, |t: &[f64]| {
            let (x, wt, b) = (
                &t[..n_in],
                &t[n_in..n_in + n_in * n_out],
                &t[n_in + n_in * n_out..],
            );
            let y = dense_forward(wt, b, x, n_in)?;
            let (mut dw, mut db) = (vec![0.0; wt.len()], vec![0.0; n_out]);
            let dx = dense_backward(wt, x, n_in, &r, &mut dw, &mut db);
            Ok((weighted_sum(&y, &r), [dx, dw, db].concat()))
        })?);
    }

    {
        let theta: Vec<f64> = uniform(&mut rng, 16)
            .into_iter()
            .map(|v| {
                if v.abs() < opts.kink_tolerance {
                    v + 0.1
                } else {
                    v
                }
            })
            .collect();
        let r = uniform(&mut rng, 16);
        entries.push(check("relu", &theta, step, |t: &[f64]| {
            let mut y = t.to_vec();
            relu_forward(&mut y);
            let mut d = r.clone();
            relu_backward(&y, &mut d);
            Ok((weighted_sum(&y, &r), d))
        })?);
    }

    {
        let theta = uniform(&mut rng, 5)
            .into_iter()
            .map(|v| v * 4.0)
            .collect::<Vec<_>>();
        entries.push(check(
            "softmax_cross_entropy",
            &theta,
            step,
            |t: &[f64]| Ok(softmax_cross_entropy(t, 2)?),
        )?);
    }

    Ok(GradcheckReport::from_entries(entries, opts.threshold))
}
