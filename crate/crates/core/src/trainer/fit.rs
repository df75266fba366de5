use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{adam_step, clip_gradients, lr_at_step, AdamState, OptimizerConfig, TrainError};
use crate::exec::ExecMode;
use crate::net::{sample_seed, Network, SampleRef};

/// Segment-level validation score under the best aggregation strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationScore {
    pub ua: f64,
    pub wa: f64,
    pub strategy: String,
}

pub trait Validator {
    fn validate(&self, net: &Network<f32>) -> Result<ValidationScore, TrainError>;
}

impl<F: Fn(&Network<f32>) -> Result<ValidationScore, TrainError>> Validator for F {
    fn validate(&self, net: &Network<f32>) -> Result<ValidationScore, TrainError> {
        self(net)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_ua: f64,
    pub val_wa: f64,
    pub strategy: String,
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    /// Parameters from the epoch with the highest validation UA (the initial network when no
    /// epoch ran).
    pub best: Network<f32>,
    pub best_val_ua: Option<f64>,
    pub best_strategy: Option<String>,
    pub best_epoch: Option<usize>,
    pub log: Vec<EpochRecord>,
    pub steps: u64,
}

const SHUFFLE_STREAM: u64 = 0x5348_5546;
const DROPOUT_STREAM: u64 = 0x4452_4f50;

/// Trains `net` on `train` (already balanced) and keeps the parameters with the best
/// validation UA; ties go to the later epoch. `on_epoch` sees each log record as it is made.
pub fn fit(
    mut net: Network<f32>,
    train: &[SampleRef<'_>],
    validator: &dyn Validator,
    cfg: &OptimizerConfig,
    mode: ExecMode,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<FitOutcome, TrainError> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(TrainError::EmptyTrain);
    }
    let mut state = AdamState::new(&net.params);
    let mut out = FitOutcome {
        best: net.clone(),
        best_val_ua: None,
        best_strategy: None,
        best_epoch: None,
        log: Vec::with_capacity(cfg.max_epochs),
        steps: 0,
    };
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..cfg.max_epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(cfg.seed ^ SHUFFLE_STREAM, epoch));
        order.sort_unstable();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut lr = lr_at_step(state.step, cfg);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<SampleRef> = chunk.iter().map(|&i| train[i]).collect();
            let step = state.step;
            let (loss, mut grads) = net
                .batch_gradients(
                    &batch,
                    Some(sample_seed(cfg.seed ^ DROPOUT_STREAM, step as usize)),
                    mode,
                )
                .map_err(|e| match e {
                    crate::net::NetError::NonFinite(_) => TrainError::Divergence {
                        epoch,
                        step,
                        loss: f64::NAN,
                    },
                    other => other.into(),
                })?;
            if !loss.total.is_finite() {
                return Err(TrainError::Divergence {
                    epoch,
                    step,
                    loss: loss.total,
                });
            }
            loss_sum += loss.total * batch.len() as f64;
            clip_gradients(&mut grads, &net.params, cfg.clip_lo, cfg.clip_hi)?;
            lr = lr_at_step(step, cfg);
            adam_step(&mut net.params, &grads, &mut state, cfg)?;
        }
        let score = validator.validate(&net)?;
        let rec = EpochRecord {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            val_ua: score.ua,
            val_wa: score.wa,
            strategy: score.strategy.clone(),
            lr,
        };
        on_epoch(&rec);
        if out.best_val_ua.is_none_or(|b| score.ua >= b) {
            out.best = net.clone();
            out.best_val_ua = Some(score.ua);
            out.best_strategy = Some(score.strategy);
            out.best_epoch = Some(epoch);
        }
        out.log.push(rec);
    }
    out.steps = state.step;
    Ok(out)
}
