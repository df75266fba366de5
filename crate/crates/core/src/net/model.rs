use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::conv::{
    conv_backward, conv_forward, pool_backward, pool_forward, Activation, PoolCache,
};
use super::dense::{dense_backward, dense_forward, dropout_mask, relu_backward, relu_forward};
use super::loss::{multitask_total, softmax, softmax_cross_entropy, LossBreakdown};
use super::lstm::{bilstm_backward, bilstm_forward, BiLstmCache, LstmWeights};
use super::params::{he_normal, Gradients, ParameterSet, Tensor};
use super::shape::{valid_after, ConvSpec, PoolSpec, ResolvedConv, Shape2D, StageSpec};
use super::{NetError, Scalar};
use crate::exec::{map_indexed, ExecMode};

pub const GENDER_CLASSES: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub conv_stack: Vec<StageSpec>,
    pub recurrent_hidden: usize,
    pub recurrent_dropout: f64,
    pub dense_hidden: Vec<usize>,
    pub emotion_classes: usize,
    pub multitask: bool,
}

fn pool(kernel: usize) -> StageSpec {
    StageSpec::MaxPool(PoolSpec {
        kernel,
        stride: kernel,
    })
}

impl ModelSpec {
    /// Three full-width temporal convolutions (time extents 5/3/3, stride 2 on the first)
    /// with time pooling, BiLSTM(60), one dense layer. 220,346 parameters for 4 classes on
    /// 300×120 inputs without the gender head.
    pub fn temporal_default(emotion_classes: usize, multitask: bool) -> Self {
        Self {
            conv_stack: vec![
                StageSpec::Conv(ConvSpec::temporal(5, 2, 0, 32)),
                pool(2),
                StageSpec::Conv(ConvSpec::temporal(3, 1, 0, 64)),
                pool(2),
                StageSpec::Conv(ConvSpec::temporal(3, 1, 0, 64)),
            ],
            recurrent_hidden: 60,
            recurrent_dropout: 0.5,
            dense_hidden: vec![30],
            emotion_classes,
            multitask,
        }
    }

    /// Two strided 3×3 convolutions over the time-frequency image, BiLSTM(60), one dense
    /// layer. 1,242,299 parameters for 4 classes on 300×120 inputs without the gender head.
    pub fn conv2d_default(emotion_classes: usize, multitask: bool) -> Self {
        Self {
            conv_stack: vec![
                StageSpec::Conv(ConvSpec::two_d(3, 2, 1, 16)),
                StageSpec::Conv(ConvSpec::two_d(3, 2, 1, 32)),
            ],
            recurrent_hidden: 60,
            recurrent_dropout: 0.5,
            dense_hidden: vec![83],
            emotion_classes,
            multitask,
        }
    }

    /// A narrow temporal network for quick experiments on small corpora.
    pub fn temporal_compact(emotion_classes: usize, multitask: bool) -> Self {
        Self {
            conv_stack: vec![
                StageSpec::Conv(ConvSpec::temporal(5, 2, 0, 16)),
                pool(2),
                StageSpec::Conv(ConvSpec::temporal(3, 1, 0, 24)),
                pool(2),
            ],
            recurrent_hidden: 24,
            recurrent_dropout: 0.5,
            dense_hidden: vec![32],
            emotion_classes,
            multitask,
        }
    }

    pub fn preset(name: &str, emotion_classes: usize, multitask: bool) -> Option<Self> {
        match name {
            "temporal" => Some(Self::temporal_default(emotion_classes, multitask)),
            "2d" => Some(Self::conv2d_default(emotion_classes, multitask)),
            "compact" => Some(Self::temporal_compact(emotion_classes, multitask)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum StagePlan {
    Conv {
        rc: ResolvedConv,
        input: Shape2D,
        w: usize,
        b: usize,
    },
    Pool {
        spec: PoolSpec,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct DensePlan {
    n_in: usize,
    n_out: usize,
    w: usize,
    b: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct Plan {
    stages: Vec<StagePlan>,
    seq_steps: usize,
    seq_dims: usize,
    fwd: [usize; 3],
    bwd: [usize; 3],
    trunk: Vec<DensePlan>,
    head_emotion: DensePlan,
    head_gender: Option<DensePlan>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Targets {
    pub emotion: usize,
    pub gender: Option<usize>,
}

/// A sub-segment as the network sees it: `input.height × input.width` row-major features.
#[derive(Debug, Clone, Copy)]
pub struct SampleRef<'a> {
    pub features: &'a [f32],
    pub valid: usize,
    pub targets: Targets,
}

/// Class posteriors for one sub-segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub emotion: Vec<f64>,
    pub gender: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<F> {
    pub spec: ModelSpec,
    pub input: Shape2D,
    pub params: ParameterSet<F>,
    plan: Plan,
}

struct Trace<F> {
    /// Input of every stage, then the final conv-stack output; each with its valid length.
    maps: Vec<(Activation<F>, usize)>,
    pools: Vec<Option<PoolCache>>,
    lstm: BiLstmCache<F>,
    mask: Option<Vec<F>>,
    flat: Vec<F>,
    flat_active: usize,
    /// Post-ReLU output of each trunk layer.
    trunk: Vec<Vec<F>>,
    logits_emotion: Vec<F>,
    logits_gender: Option<Vec<F>>,
}

fn add_dense<F: Scalar>(
    params: &mut ParameterSet<F>,
    rng: &mut ChaCha8Rng,
    name: &str,
    n_in: usize,
    n_out: usize,
) -> DensePlan {
    let w = params.push(Tensor {
        name: format!("{name}.weight"),
        shape: vec![n_out, n_in],
        value: he_normal(rng, n_in, n_out * n_in),
    });
    let b = params.push(Tensor::zeros(format!("{name}.bias"), vec![n_out]));
    DensePlan { n_in, n_out, w, b }
}

/// Validates `spec` against `input` by chaining output sizes, then draws He-normal weights
/// (zero biases) from `seed`.
pub fn assemble_model<F: Scalar>(
    spec: &ModelSpec,
    input: Shape2D,
    seed: u64,
) -> Result<Network<F>, NetError> {
    Network::new(spec.clone(), input, seed)
}

impl<F: Scalar> Network<F> {
    pub fn new(spec: ModelSpec, input: Shape2D, seed: u64) -> Result<Self, NetError> {
        if input.height == 0 || input.width == 0 {
            return Err(NetError::InvalidSpec(format!(
                "empty input shape {input:?}"
            )));
        }
        if spec.emotion_classes < 2 {
            return Err(NetError::InvalidSpec(
                "at least two emotion classes are required".into(),
            ));
        }
        if spec.recurrent_hidden == 0 || spec.dense_hidden.contains(&0) {
            return Err(NetError::InvalidSpec(
                "zero-width recurrent or dense layer".into(),
            ));
        }
        if !(0.0..1.0).contains(&spec.recurrent_dropout) {
            return Err(NetError::InvalidSpec(format!(
                "dropout {} outside [0, 1)",
                spec.recurrent_dropout
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParameterSet::new(seed);
        let mut shape = input;
        let mut channels = 1;
        let mut stages = Vec::new();
        let mut n_conv = 0;
        for (i, st) in spec.conv_stack.iter().enumerate() {
            let at = |e: NetError| NetError::InvalidSpec(format!("stage {i}: {e}"));
            match st {
                StageSpec::Conv(c) => {
                    let rc = c.resolve(shape, channels).map_err(at)?;
                    let out = rc.output(shape).map_err(at)?;
                    let w = params.push(Tensor {
                        name: format!("conv{n_conv}.weight"),
                        shape: vec![rc.out_channels, rc.kernel_h, rc.kernel_w, rc.in_channels],
                        value: he_normal(&mut rng, rc.patch_len(), rc.weight_len()),
                    });
                    let b = params.push(Tensor::zeros(
                        format!("conv{n_conv}.bias"),
                        vec![rc.out_channels],
                    ));
                    stages.push(StagePlan::Conv {
                        rc,
                        input: shape,
                        w,
                        b,
                    });
                    n_conv += 1;
                    shape = out;
                    channels = rc.out_channels;
                }
                StageSpec::MaxPool(p) => {
                    shape = p.output(shape).map_err(at)?;
                    stages.push(StagePlan::Pool { spec: *p });
                }
            }
        }
        let (seq_steps, seq_dims, h) =
            (shape.height, shape.width * channels, spec.recurrent_hidden);
        let mut lstm = |dir: &str, params: &mut ParameterSet<F>| {
            [
                params.push(Tensor {
                    name: format!("lstm.{dir}.w_ih"),
                    shape: vec![4 * h, seq_dims],
                    value: he_normal(&mut rng, seq_dims, 4 * h * seq_dims),
                }),
                params.push(Tensor {
                    name: format!("lstm.{dir}.w_hh"),
                    shape: vec![4 * h, h],
                    value: he_normal(&mut rng, h, 4 * h * h),
                }),
                params.push(Tensor::zeros(format!("lstm.{dir}.bias"), vec![4 * h])),
            ]
        };
        let fwd = lstm("fwd", &mut params);
        let bwd = lstm("bwd", &mut params);
        let mut n_in = seq_steps * 2 * h;
        let mut trunk = Vec::new();
        for (i, &n_out) in spec.dense_hidden.iter().enumerate() {
            trunk.push(add_dense(
                &mut params,
                &mut rng,
                &format!("dense{i}"),
                n_in,
                n_out,
            ));
            n_in = n_out;
        }
        let head_emotion = add_dense(
            &mut params,
            &mut rng,
            "head_emotion",
            n_in,
            spec.emotion_classes,
        );
        let head_gender = spec
            .multitask
            .then(|| add_dense(&mut params, &mut rng, "head_gender", n_in, GENDER_CLASSES));
        Ok(Self {
            spec,
            input,
            params,
            plan: Plan {
                stages,
                seq_steps,
                seq_dims,
                fwd,
                bwd,
                trunk,
                head_emotion,
                head_gender,
            },
        })
    }

    pub fn param_count(&self) -> usize {
        self.params.param_count()
    }

    /// Time steps and per-step width of the sequence entering the BiLSTM.
    pub fn sequence_shape(&self) -> (usize, usize) {
        (self.plan.seq_steps, self.plan.seq_dims)
    }

    /// Same architecture with parameters converted to another precision.
    pub fn cast<G: Scalar>(&self) -> Network<G> {
        Network {
            spec: self.spec.clone(),
            input: self.input,
            params: self.params.cast(),
            plan: self.plan.clone(),
        }
    }

    fn value(&self, slot: usize) -> &[F] {
        &self.params.tensors[slot].value
    }

    fn lstm_weights(&self, s: [usize; 3]) -> LstmWeights<'_, F> {
        LstmWeights {
            w_ih: self.value(s[0]),
            w_hh: self.value(s[1]),
            b: self.value(s[2]),
        }
    }

    fn check_input(&self, x: &[F], valid: usize) -> Result<(), NetError> {
        if x.len() != self.input.height * self.input.width {
            return Err(NetError::Shape(format!(
                "{} feature values for a {}×{} input",
                x.len(),
                self.input.height,
                self.input.width
            )));
        }
        if valid == 0 || valid > self.input.height {
            return Err(NetError::ValidLength {
                valid,
                len: self.input.height,
            });
        }
        Ok(())
    }

    fn trace(
        &self,
        x: &[F],
        valid: usize,
        dropout_seed: Option<u64>,
    ) -> Result<Trace<F>, NetError> {
        self.check_input(x, valid)?;
        let mut cur = (
            Activation::from_vec(self.input.height, self.input.width, 1, x.to_vec())?,
            valid,
        );
        let mut maps = Vec::with_capacity(self.plan.stages.len() + 1);
        let mut pools = Vec::with_capacity(self.plan.stages.len());
        for st in &self.plan.stages {
            let next = match st {
                StagePlan::Conv { rc, w, b, .. } => {
                    let (mut y, v) =
                        conv_forward(&cur.0, cur.1, rc, self.value(*w), self.value(*b))?;
                    relu_forward(&mut y.data[..v * y.width * y.channels]);
                    pools.push(None);
                    (y, v)
                }
                StagePlan::Pool { spec } => {
                    let (y, v, c) = pool_forward(&cur.0, cur.1, spec)?;
                    pools.push(Some(c));
                    (y, v)
                }
            };
            maps.push(std::mem::replace(&mut cur, next));
        }
        let (steps, dims, h) = (
            self.plan.seq_steps,
            self.plan.seq_dims,
            self.spec.recurrent_hidden,
        );
        let (mut out, lstm) = bilstm_forward(
            &cur.0.data,
            steps,
            dims,
            cur.1,
            h,
            &self.lstm_weights(self.plan.fwd),
            &self.lstm_weights(self.plan.bwd),
        )?;
        let flat_active = cur.1 * 2 * h;
        maps.push(cur);
        let mask = match dropout_seed {
            Some(seed) if self.spec.recurrent_dropout > 0.0 => {
                let m = dropout_mask::<F>(self.spec.recurrent_dropout, seed, flat_active);
                for (o, k) in out.iter_mut().zip(&m) {
                    *o = *o * *k;
                }
                Some(m)
            }
            _ => None,
        };
        let mut trunk = Vec::with_capacity(self.plan.trunk.len());
        let mut active = flat_active;
        for d in &self.plan.trunk {
            let input = trunk.last().unwrap_or(&out);
            let mut y = dense_forward(self.value(d.w), self.value(d.b), input, active)?;
            relu_forward(&mut y);
            active = d.n_out;
            trunk.push(y);
        }
        let last = trunk.last().unwrap_or(&out);
        let he = &self.plan.head_emotion;
        let logits_emotion = dense_forward(self.value(he.w), self.value(he.b), last, active)?;
        let logits_gender = match &self.plan.head_gender {
            Some(hg) => Some(dense_forward(
                self.value(hg.w),
                self.value(hg.b),
                last,
                active,
            )?),
            None => None,
        };
        Ok(Trace {
            maps,
            pools,
            lstm,
            mask,
            flat: out,
            flat_active,
            trunk,
            logits_emotion,
            logits_gender,
        })
    }

    fn losses(
        &self,
        t: &Trace<F>,
        targets: Targets,
    ) -> Result<(LossBreakdown, Vec<F>, Option<Vec<F>>), NetError> {
        let (le, ge) = softmax_cross_entropy(&t.logits_emotion, targets.emotion)?;
        let (lg, gg) = match (&t.logits_gender, targets.gender) {
            (Some(l), Some(g)) => {
                let (a, b) = softmax_cross_entropy(l, g)?;
                (a, Some(b))
            }
            (Some(_), None) => {
                return Err(NetError::InvalidSpec(
                    "multitask model needs a gender target".into(),
                ))
            }
            (None, _) => (F::zero(), None),
        };
        let lb = multitask_total(
            le.to_f64().unwrap_or(f64::NAN),
            lg.to_f64().unwrap_or(f64::NAN),
            self.plan.head_gender.is_some(),
        );
        if !lb.total.is_finite() {
            return Err(NetError::NonFinite("loss".into()));
        }
        Ok((lb, ge, gg))
    }

    /// Loss of one sample. `dropout_seed = None` runs in evaluation mode.
    pub fn sample_loss(
        &self,
        x: &[F],
        valid: usize,
        targets: Targets,
        dropout_seed: Option<u64>,
    ) -> Result<LossBreakdown, NetError> {
        let t = self.trace(x, valid, dropout_seed)?;
        Ok(self.losses(&t, targets)?.0)
    }

    /// Loss and parameter gradients of one sample.
    pub fn sample_gradients(
        &self,
        x: &[F],
        valid: usize,
        targets: Targets,
        dropout_seed: Option<u64>,
    ) -> Result<(LossBreakdown, Gradients<F>), NetError> {
        let t = self.trace(x, valid, dropout_seed)?;
        let (lb, ge, gg) = self.losses(&t, targets)?;
        let mut grads = Gradients::zeros_like(&self.params);
        let last = t.trunk.last().unwrap_or(&t.flat);
        let active = self.plan.trunk.last().map_or(t.flat_active, |d| d.n_out);
        let head = |plan: &DensePlan, g: &[F], grads: &mut Gradients<F>| {
            let (mut dw, mut db) = (
                std::mem::take(&mut grads.slots[plan.w]),
                std::mem::take(&mut grads.slots[plan.b]),
            );
            let dx = dense_backward(self.value(plan.w), last, active, g, &mut dw, &mut db);
            grads.slots[plan.w] = dw;
            grads.slots[plan.b] = db;
            dx
        };
        let mut d = head(&self.plan.head_emotion, &ge, &mut grads);
        if let (Some(plan), Some(g)) = (&self.plan.head_gender, gg) {
            for (a, b) in d.iter_mut().zip(head(plan, &g, &mut grads)) {
                *a = *a + b;
            }
        }
        for (i, plan) in self.plan.trunk.iter().enumerate().rev() {
            relu_backward(&t.trunk[i], &mut d);
            let input = if i == 0 { &t.flat } else { &t.trunk[i - 1] };
            let act = if i == 0 {
                t.flat_active
            } else {
                self.plan.trunk[i - 1].n_out
            };
            let (mut dw, mut db) = (
                std::mem::take(&mut grads.slots[plan.w]),
                std::mem::take(&mut grads.slots[plan.b]),
            );
            d = dense_backward(self.value(plan.w), input, act, &d, &mut dw, &mut db);
            grads.slots[plan.w] = dw;
            grads.slots[plan.b] = db;
        }
        if let Some(m) = &t.mask {
            for (g, k) in d.iter_mut().zip(m) {
                *g = *g * *k;
            }
        }
        let seq = t.maps.last().expect("sequence map");
        let lg = bilstm_backward(
            &seq.0.data,
            &t.lstm,
            &self.lstm_weights(self.plan.fwd),
            &self.lstm_weights(self.plan.bwd),
            &d,
        )?;
        for (slot, g) in self
            .plan
            .fwd
            .iter()
            .zip(lg.fwd)
            .chain(self.plan.bwd.iter().zip(lg.bwd))
        {
            grads.slots[*slot] = g;
        }
        let mut dmap = Activation::from_vec(seq.0.height, seq.0.width, seq.0.channels, lg.d_input)?;
        for (i, st) in self.plan.stages.iter().enumerate().rev() {
            let (input, valid_in) = (&t.maps[i].0, t.maps[i].1);
            match st {
                StagePlan::Conv { rc, w, b, .. } => {
                    let (out, valid_out) = (&t.maps[i + 1].0, t.maps[i + 1].1);
                    relu_backward(&out.data, &mut dmap.data);
                    let mut din = (i > 0)
                        .then(|| Activation::zeros(input.height, input.width, input.channels));
                    let (mut dw, mut db) = (
                        std::mem::take(&mut grads.slots[*w]),
                        std::mem::take(&mut grads.slots[*b]),
                    );
                    conv_backward(
                        input,
                        valid_in,
                        rc,
                        self.value(*w),
                        &dmap,
                        valid_out,
                        &mut dw,
                        &mut db,
                        din.as_mut(),
                    )?;
                    grads.slots[*w] = dw;
                    grads.slots[*b] = db;
                    match din {
                        Some(x) => dmap = x,
                        None => break,
                    }
                }
                StagePlan::Pool { .. } => {
                    dmap = pool_backward(&dmap, t.pools[i].as_ref().expect("pool cache"));
                }
            }
        }
        Ok((lb, grads))
    }

    /// Smallest distance of any ReLU pre-activation from zero, or of any pooling maximum
    /// from its runner-up, on the valid part of the sample (evaluation mode).
    pub fn kink_margin(
        &self,
        x: &[F],
        valid: usize,
        dropout_seed: Option<u64>,
    ) -> Result<f64, NetError> {
        let t = self.trace(x, valid, dropout_seed)?;
        let f = |v: F| v.to_f64().unwrap_or(0.0);
        let mut margin = f64::INFINITY;
        for (i, st) in self.plan.stages.iter().enumerate() {
            let (input, valid_in) = (&t.maps[i].0, t.maps[i].1);
            match st {
                StagePlan::Conv { rc, w, b, .. } => {
                    let (y, v) = conv_forward(input, valid_in, rc, self.value(*w), self.value(*b))?;
                    for z in &y.data[..v * y.width * y.channels] {
                        margin = margin.min(f(*z).abs());
                    }
                }
                StagePlan::Pool { spec } => {
                    let row = input.row_len();
                    for oy in 0..t.maps[i + 1].1 {
                        let (s, e) = (
                            oy * spec.stride,
                            (oy * spec.stride + spec.kernel).min(valid_in),
                        );
                        for j in 0..row {
                            let mut vals: Vec<f64> =
                                (s..e).map(|iy| f(input.data[iy * row + j])).collect();
                            vals.sort_by(|a, b| b.total_cmp(a));
                            // Ties between rectified zeros stay tied under small perturbations.
                            if vals.len() > 1 && vals[0] != 0.0 {
                                margin = margin.min(vals[0] - vals[1]);
                            }
                        }
                    }
                }
            }
        }
        let mut input = &t.flat;
        let mut active = t.flat_active;
        for (i, d) in self.plan.trunk.iter().enumerate() {
            let z = dense_forward(self.value(d.w), self.value(d.b), input, active)?;
            for v in z {
                margin = margin.min(f(v).abs());
            }
            input = &t.trunk[i];
            active = d.n_out;
        }
        Ok(margin)
    }

    pub fn predict(&self, x: &[F], valid: usize) -> Result<Prediction, NetError> {
        let t = self.trace(x, valid, None)?;
        let post = |l: &[F]| {
            softmax(l)
                .into_iter()
                .map(|p| p.to_f64().unwrap_or(f64::NAN))
                .collect::<Vec<f64>>()
        };
        Ok(Prediction {
            emotion: post(&t.logits_emotion),
            gender: t.logits_gender.as_deref().map(post),
        })
    }
}

fn to_scalar<F: Scalar>(x: &[f32]) -> Vec<F> {
    x.iter().map(|v| F::of(*v as f64)).collect()
}

/// Per-sample dropout seed derived from a batch seed.
pub fn sample_seed(batch_seed: u64, index: usize) -> u64 {
    let mut z = batch_seed
        ^ (index as u64)
            .wrapping_add(1)
            .wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl<F: Scalar> Network<F> {
    /// Mean loss and mean gradients over a batch. Samples run independently under `mode`;
    /// the reduction is always in batch order, so both modes give identical results.
    pub fn batch_gradients(
        &self,
        batch: &[SampleRef<'_>],
        dropout_seed: Option<u64>,
        mode: ExecMode,
    ) -> Result<(LossBreakdown, Gradients<F>), NetError> {
        if batch.is_empty() {
            return Err(NetError::Shape("empty batch".into()));
        }
        let per = map_indexed(mode, batch, |i, s| {
            self.sample_gradients(
                &to_scalar(s.features),
                s.valid,
                s.targets,
                dropout_seed.map(|d| sample_seed(d, i)),
            )
        });
        let mut total = Gradients::zeros_like(&self.params);
        let (mut le, mut lg, mut lt) = (0.0, 0.0, 0.0);
        for r in per {
            let (lb, g) = r?;
            le += lb.loss_emotion;
            lg += lb.loss_gender.unwrap_or(0.0);
            lt += lb.total;
            total.add_assign(&g);
        }
        let n = batch.len() as f64;
        total.scale(F::of(1.0 / n));
        Ok((
            LossBreakdown {
                loss_emotion: le / n,
                loss_gender: self.plan.head_gender.map(|_| lg / n),
                total: lt / n,
            },
            total,
        ))
    }

    pub fn predict_batch(
        &self,
        samples: &[(&[f32], usize)],
        mode: ExecMode,
    ) -> Result<Vec<Prediction>, NetError> {
        map_indexed(mode, samples, |_, (x, v)| self.predict(&to_scalar(x), *v))
            .into_iter()
            .collect()
    }
}

/// Valid sequence length after the conv stack for `valid` input frames.
pub fn valid_through(spec: &ModelSpec, valid: usize) -> usize {
    spec.conv_stack.iter().fold(valid, |v, st| match st {
        StageSpec::Conv(c) => valid_after(v, c.kernel_h, c.stride_h, c.padding),
        StageSpec::MaxPool(p) => valid_after(v, p.kernel, p.stride, 0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::rel_err;
    use rand::{Rng, SeedableRng};

    fn tiny_spec(multitask: bool) -> ModelSpec {
        ModelSpec {
            conv_stack: vec![
                StageSpec::Conv(ConvSpec::two_d(3, 1, 1, 2)),
                pool(2),
                StageSpec::Conv(ConvSpec::temporal(3, 1, 0, 3)),
            ],
            recurrent_hidden: 3,
            recurrent_dropout: 0.5,
            dense_hidden: vec![4],
            emotion_classes: 3,
            multitask,
        }
    }

    fn input(seed: u64, n: usize) -> Vec<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-1.0f32..1.0)).collect()
    }

    #[test]
    fn default_parameter_counts() {
        let t = Network::<f32>::new(
            ModelSpec::temporal_default(4, false),
            Shape2D::new(300, 120),
            0,
        )
        .unwrap();
        assert_eq!(t.param_count(), 220_346);
        let d = Network::<f32>::new(
            ModelSpec::conv2d_default(4, false),
            Shape2D::new(300, 120),
            0,
        )
        .unwrap();
        assert_eq!(d.param_count(), 1_242_299);
    }

    #[test]
    fn lstm_and_dense_counts() {
        let spec = ModelSpec {
            conv_stack: vec![],
            recurrent_hidden: 5,
            recurrent_dropout: 0.0,
            dense_hidden: vec![],
            emotion_classes: 4,
            multitask: false,
        };
        let n = Network::<f32>::new(spec, Shape2D::new(2, 10), 0).unwrap();
        let lstm = 2 * 4 * (5 * (10 + 5) + 5);
        assert_eq!(n.param_count(), lstm + (2 * 10) * 4 + 4);
    }

    #[test]
    fn emits_logits_per_class_and_is_seeded() {
        let spec = ModelSpec::temporal_compact(4, true);
        let a = Network::<f32>::new(spec.clone(), Shape2D::new(300, 40), 3).unwrap();
        let b = Network::<f32>::new(spec.clone(), Shape2D::new(300, 40), 3).unwrap();
        let c = Network::<f32>::new(spec, Shape2D::new(300, 40), 4).unwrap();
        assert_eq!(a.params, b.params);
        assert_ne!(a.params, c.params);
        let p = a.predict(&input(1, 300 * 40), 120).unwrap();
        assert_eq!(p.emotion.len(), 4);
        assert_eq!(p.gender.as_ref().unwrap().len(), 2);
        assert!((p.emotion.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn invalid_stack_is_rejected() {
        let spec = ModelSpec {
            conv_stack: vec![StageSpec::Conv(ConvSpec::temporal(50, 1, 0, 2))],
            ..tiny_spec(false)
        };
        assert!(matches!(
            Network::<f32>::new(spec, Shape2D::new(12, 9), 0),
            Err(NetError::InvalidSpec(_))
        ));
    }

    #[test]
    fn padding_is_invisible() {
        let spec = ModelSpec::temporal_compact(4, true);
        let net = Network::<f32>::new(spec, Shape2D::new(300, 40), 5).unwrap();
        let x = input(2, 300 * 40);
        let mut y = x.clone();
        for v in &mut y[137 * 40..] {
            *v = 7.5;
        }
        let tg = Targets {
            emotion: 2,
            gender: Some(1),
        };
        let a = net
            .sample_gradients(&to_scalar::<f32>(&x), 137, tg, Some(9))
            .unwrap();
        let b = net
            .sample_gradients(&to_scalar::<f32>(&y), 137, tg, Some(9))
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn emotion_only_has_no_gender_head() {
        let net = Network::<f32>::new(tiny_spec(false), Shape2D::new(12, 9), 0).unwrap();
        assert!(net
            .params
            .names()
            .iter()
            .all(|n| !n.starts_with("head_gender")));
        let mt = Network::<f32>::new(tiny_spec(true), Shape2D::new(12, 9), 0).unwrap();
        assert_eq!(mt.param_count() - net.param_count(), 4 * 2 + 2);
    }

    #[test]
    fn sequential_and_parallel_batches_agree() {
        let net = Network::<f32>::new(tiny_spec(true), Shape2D::new(12, 9), 1).unwrap();
        let xs: Vec<Vec<f32>> = (0..5).map(|i| input(i, 108)).collect();
        let batch: Vec<SampleRef> = xs
            .iter()
            .enumerate()
            .map(|(i, x)| SampleRef {
                features: x,
                valid: 6 + i,
                targets: Targets {
                    emotion: i % 3,
                    gender: Some(i % 2),
                },
            })
            .collect();
        let a = net
            .batch_gradients(&batch, Some(3), ExecMode::Sequential)
            .unwrap();
        let b = net
            .batch_gradients(&batch, Some(3), ExecMode::Parallel)
            .unwrap();
        assert_eq!(a, b);
    }

    /// Central differences on every parameter of a tiny multitask model in f64.
    #[test]
    fn whole_model_finite_difference() {
        let net = Network::<f64>::new(tiny_spec(true), Shape2D::new(12, 9), 2).unwrap();
        let mut seed = 10;
        let (x, valid) = loop {
            let x: Vec<f64> = input(seed, 108).iter().map(|v| *v as f64).collect();
            if net.kink_margin(&x, 10, Some(4)).unwrap() > 1e-3 {
                break (x, 10);
            }
            seed += 1;
            assert!(seed < 1000, "no kink-free input found");
        };
        let tg = Targets {
            emotion: 1,
            gender: Some(0),
        };
        let (_, g) = net.sample_gradients(&x, valid, tg, Some(4)).unwrap();
        let eps = 1e-5;
        let mut worst = 0.0f64;
        for (ti, t) in net.params.tensors.iter().enumerate() {
            for e in 0..t.len() {
                let mut p = net.clone();
                p.params.tensors[ti].value[e] += eps;
                let up = p.sample_loss(&x, valid, tg, Some(4)).unwrap().total;
                p.params.tensors[ti].value[e] -= 2.0 * eps;
                let down = p.sample_loss(&x, valid, tg, Some(4)).unwrap().total;
                worst = worst.max(rel_err(g.slots[ti][e], (up - down) / (2.0 * eps)));
            }
        }
        assert!(worst <= 1e-4, "worst {worst}");
    }

    #[test]
    fn valid_length_through_stack() {
        let spec = ModelSpec::temporal_default(4, false);
        assert_eq!(valid_through(&spec, 300), 34);
        assert_eq!(valid_through(&spec, 30), 1);
        assert_eq!(valid_through(&spec, 1), 1);
    }
}
