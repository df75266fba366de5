//! Differentiable compute core: masked temporal/2D convolutions, time max-pooling, a masked
//! bidirectional LSTM, dense/ReLU/dropout layers, softmax cross-entropy and the multitask
//! emotion + gender model built from them.
//!
//! All layers are generic over [`Scalar`] so the same code trains in `f32` and is checked
//! against finite differences in `f64`. Activations use a channels-last `[time][width][channel]`
//! layout; rows at or beyond a sample's valid length are held at exactly zero.

mod checkpoint;
mod conv;
mod dense;
mod loss;
mod lstm;
mod model;
mod params;
mod shape;

use std::fmt::Debug;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive};
use thiserror::Error;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, sidecar_path,
    CheckpointMeta,
};
pub use conv::{conv_backward, conv_forward, pool_backward, pool_forward, Activation, PoolCache};
pub use dense::{dense_backward, dense_forward, dropout_mask, relu_backward, relu_forward};
pub use loss::{multitask_total, softmax, softmax_cross_entropy, LossBreakdown};
pub use lstm::{bilstm_backward, bilstm_forward, BiLstmCache, BiLstmGrads, LstmWeights};
pub use model::{
    assemble_model, sample_seed, valid_through, ModelSpec, Network, Prediction, SampleRef, Targets,
    GENDER_CLASSES,
};
pub use params::{he_normal, Gradients, ParameterSet, Tensor};
pub use shape::{
    mask_size, valid_after, ConvMode, ConvSpec, PoolSpec, ResolvedConv, Shape2D, StageSpec,
};

pub trait Scalar: Float + FromPrimitive + Default + Debug + Send + Sync + Sum + 'static {
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("representable")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[derive(Debug, Error, PartialEq)]
pub enum NetError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid model specification: {0}")]
    InvalidSpec(String),
    #[error("class index {class} out of range for {n} classes")]
    ClassOutOfRange { class: usize, n: usize },
    #[error("valid length {valid} outside [1, {len}]")]
    ValidLength { valid: usize, len: usize },
    #[error("{path}: bad checkpoint: {reason}")]
    Checkpoint { path: String, reason: String },
    #[error("non-finite value in {0}")]
    NonFinite(String),
}

/// Dot product with eight independent accumulators (fixed summation order).
#[inline]
pub(crate) fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [F::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] = acc[k] + x[k] * y[k];
        }
    }
    let mut tail = F::zero();
    for (x, y) in ra.iter().zip(rb) {
        tail = tail + *x * *y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// `y += alpha * x`
#[inline]
pub(crate) fn axpy<F: Scalar>(alpha: F, x: &[F], y: &mut [F]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi = *yi + alpha * *xi;
    }
}

#[inline]
pub(crate) fn sigmoid<F: Scalar>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}

/// `|a − n| / max(|a|, |n|, 1e-6)`: relative error between analytic and numeric gradients.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}
