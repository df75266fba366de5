//! Optimization: staircase-decayed Adam, elementwise gradient clipping, the epoch loop with
//! best-validation-UA selection, and the finite-difference gradient harness.

mod fit;
mod gradcheck;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::net::{Gradients, NetError, ParameterSet, Scalar};

pub use fit::{fit, EpochRecord, FitOutcome, ValidationScore, Validator};
pub use gradcheck::{
    gradcheck, gradcheck_layers, tiny_model_spec, GradcheckEntry, GradcheckOptions, GradcheckReport,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("non-finite gradient in tensor {tensor}")]
    NonFiniteGradient { tensor: String },
    #[error("non-finite update in tensor {tensor}")]
    NonFiniteUpdate { tensor: String },
    #[error("training diverged at epoch {epoch}, step {step}: loss {loss}")]
    Divergence { epoch: usize, step: u64, loss: f64 },
    #[error("no training samples")]
    EmptyTrain,
    #[error("invalid optimizer configuration: {0}")]
    Config(String),
    #[error("validation failed: {0}")]
    Validation(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub lr0: f64,
    pub decay_rate: f64,
    pub decay_steps: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub clip_lo: f64,
    pub clip_hi: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            lr0: 1e-4,
            decay_rate: 0.9,
            decay_steps: 1000,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            clip_lo: -1.0,
            clip_hi: 1.0,
            batch_size: 32,
            max_epochs: 100,
            seed: 0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if !(self.lr0 > 0.0) {
            return bad("lr0 must be positive");
        }
        if !(self.clip_lo < self.clip_hi) {
            return bad("clip_lo must be below clip_hi");
        }
        if self.decay_steps == 0 || self.batch_size == 0 {
            return bad("decay_steps and batch_size must be positive");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("Adam betas must lie in [0, 1)");
        }
        Ok(())
    }
}

/// `lr0 · decay_rate^floor(step / decay_steps)`.
pub fn lr_at_step(step: u64, cfg: &OptimizerConfig) -> f64 {
    let k = step / cfg.decay_steps;
    cfg.lr0 * cfg.decay_rate.powi(k.min(i32::MAX as u64) as i32)
}

/// Clamps every gradient element into `[lo, hi]`; a NaN is a hard error naming its tensor.
pub fn clip_gradients<F: Scalar>(
    grads: &mut Gradients<F>,
    params: &ParameterSet<F>,
    lo: f64,
    hi: f64,
) -> Result<(), TrainError> {
    let (lo, hi) = (F::of(lo), F::of(hi));
    for (slot, t) in grads.slots.iter_mut().zip(&params.tensors) {
        for g in slot.iter_mut() {
            if g.is_nan() {
                return Err(TrainError::NonFiniteGradient {
                    tensor: t.name.clone(),
                });
            }
            *g = g.max(lo).min(hi);
        }
    }
    Ok(())
}

/// Adam moments and the optimization step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<F> {
    pub step: u64,
    pub m: Vec<Vec<F>>,
    pub v: Vec<Vec<F>>,
}

impl<F: Scalar> AdamState<F> {
    pub fn new(params: &ParameterSet<F>) -> Self {
        let zeros = || {
            params
                .tensors
                .iter()
                .map(|t| vec![F::zero(); t.len()])
                .collect()
        };
        Self {
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }
}

/// One Adam update with bias correction at the learning rate of the current step; the step
/// counter then advances by one.
pub fn adam_step<F: Scalar>(
    params: &mut ParameterSet<F>,
    grads: &Gradients<F>,
    state: &mut AdamState<F>,
    cfg: &OptimizerConfig,
) -> Result<(), TrainError> {
    if grads.slots.len() != params.tensors.len() || state.m.len() != params.tensors.len() {
        return Err(NetError::Shape("gradients, moments and parameters disagree".into()).into());
    }
    let t = (state.step + 1) as i32;
    let lr = lr_at_step(state.step, cfg);
    let c1 = 1.0 - cfg.adam_beta1.powi(t);
    let c2 = 1.0 - cfg.adam_beta2.powi(t);
    let (b1, b2) = (F::of(cfg.adam_beta1), F::of(cfg.adam_beta2));
    let (ob1, ob2) = (F::one() - b1, F::one() - b2);
    let step_size = F::of(lr / c1);
    let (sqrt_c2, eps) = (F::of(c2.sqrt()), F::of(cfg.adam_eps));
    for (i, tensor) in params.tensors.iter_mut().enumerate() {
        let (m, v, g) = (&mut state.m[i], &mut state.v[i], &grads.slots[i]);
        for (k, p) in tensor.value.iter_mut().enumerate() {
            m[k] = b1 * m[k] + ob1 * g[k];
            v[k] = b2 * v[k] + ob2 * g[k] * g[k];
            let upd = step_size * m[k] / (v[k].sqrt() / sqrt_c2 + eps);
            if !upd.is_finite() {
                return Err(TrainError::NonFiniteUpdate {
                    tensor: tensor.name.clone(),
                });
            }
            *p = *p - upd;
        }
    }
    state.step += 1;
    Ok(())
}
