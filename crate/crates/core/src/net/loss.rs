use serde::{Deserialize, Serialize};

use super::{NetError, Scalar};

pub fn softmax<F: Scalar>(logits: &[F]) -> Vec<F> {
    let m = logits.iter().fold(F::neg_infinity(), |a, b| a.max(*b));
    let e: Vec<F> = logits.iter().map(|z| (*z - m).exp()).collect();
    let s: F = e.iter().copied().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// `−ln softmax(logits)[target]` and its logit gradient `softmax − onehot`.
pub fn softmax_cross_entropy<F: Scalar>(
    logits: &[F],
    target: usize,
) -> Result<(F, Vec<F>), NetError> {
    let n = logits.len();
    if n < 2 {
        return Err(NetError::Shape(format!("{n} logits; at least 2 required")));
    }
    if target >= n {
        return Err(NetError::ClassOutOfRange { class: target, n });
    }
    let m = logits.iter().fold(F::neg_infinity(), |a, b| a.max(*b));
    let lse = logits.iter().map(|z| (*z - m).exp()).sum::<F>().ln() + m;
    let loss = lse - logits[target];
    let mut grad = softmax(logits);
    grad[target] = grad[target] - F::one();
    Ok((loss, grad))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub loss_emotion: f64,
    pub loss_gender: Option<f64>,
    pub total: f64,
}

pub fn multitask_total(loss_emotion: f64, loss_gender: f64, multitask: bool) -> LossBreakdown {
    if multitask {
        LossBreakdown {
            loss_emotion,
            loss_gender: Some(loss_gender),
            total: loss_emotion + loss_gender,
        }
    } else {
        LossBreakdown {
            loss_emotion,
            loss_gender: None,
            total: loss_emotion,
        }
    }
}
