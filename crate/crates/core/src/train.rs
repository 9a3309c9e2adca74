//! Mini-batch training with per-epoch validation and best-epoch selection.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{Model, ModelVariant};
use crate::data::SequenceBatch;
use crate::error::{Error, Result};
use crate::layers::bce_loss;
use crate::metrics::auroc;
use crate::optim::{Adam, AdamConfig};
use crate::scalar::Scalar;

const SHUFFLE_STREAM: u64 = 2;
const DROPOUT_STREAM: u64 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: AdamConfig,
    /// Learning-rate multiplier for the transformation network's layers.
    pub transformer_lr_scale: f64,
    /// Chunk size for evaluation-mode prediction.
    pub eval_batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 15,
            optimizer: AdamConfig::default(),
            transformer_lr_scale: 0.3,
            eval_batch_size: 256,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.eval_batch_size == 0 {
            return Err(Error::config("epochs and batch sizes must be positive"));
        }
        if !(self.transformer_lr_scale >= 0.0 && self.transformer_lr_scale.is_finite()) {
            return Err(Error::config("transformer_lr_scale must be finite and non-negative"));
        }
        self.optimizer.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_auroc: f64,
    /// Largest applied transformation parameter seen on a training batch this epoch.
    pub max_abs_transform_param: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TrainStatus {
    Completed,
    Diverged { epoch: usize, step: usize, reason: String },
}

impl TrainStatus {
    pub fn label(&self) -> &'static str {
        match self {
            TrainStatus::Completed => "completed",
            TrainStatus::Diverged { .. } => "diverged",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub variant: ModelVariant,
    pub seed: u64,
    pub config: TrainConfig,
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch with the highest validation AUROC, earliest on ties.
    pub best_epoch: Option<usize>,
    pub best_val_auroc: Option<f64>,
    pub status: TrainStatus,
    pub max_abs_transform_param: Option<f64>,
    pub wall_clock_secs: f64,
    /// Where the best-epoch checkpoint was written, if anywhere.
    pub checkpoint: Option<String>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<F> {
    pub report: TrainReport,
    /// Model as of the best validation epoch.
    pub best: Option<Model<F>>,
    /// Model after the last completed update.
    pub last: Model<F>,
}

impl<F: Scalar> TrainOutcome<F> {
    /// The best-epoch model, falling back to the last one when no epoch finished.
    pub fn selected(&self) -> &Model<F> {
        self.best.as_ref().unwrap_or(&self.last)
    }
}

/// Evaluation-mode probabilities for every example, in order.
pub fn predict<F: Scalar>(model: &Model<F>, batch: &SequenceBatch<F>, chunk: usize) -> Result<Vec<F>> {
    let idx: Vec<usize> = (0..batch.len()).collect();
    let parts: Vec<Vec<F>> = idx
        .par_chunks(chunk.max(1))
        .map(|c| model.predict(&batch.gather(c)?))
        .collect::<Result<_>>()?;
    Ok(parts.concat())
}

pub fn predict_f64<F: Scalar>(model: &Model<F>, batch: &SequenceBatch<F>, chunk: usize) -> Result<Vec<f64>> {
    Ok(predict(model, batch, chunk)?.iter().map(|p| p.to_f64_lossy()).collect())
}

fn grads_finite<F: Scalar>(model: &Model<F>) -> bool {
    model.named_layers().iter().all(|(_, p)| p.grads_finite())
}

/// Trains `model`, returning both its best-validation and final states.
///
/// A non-finite loss or gradient stops training with a `Diverged` status
/// rather than an error, so callers running many trials can carry on.
pub fn train<F: Scalar>(
    mut model: Model<F>,
    train_set: &SequenceBatch<F>,
    validation: &SequenceBatch<F>,
    config: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome<F>> {
    config.validate()?;
    if train_set.is_empty() || validation.is_empty() {
        return Err(Error::data("training and validation sets must be non-empty"));
    }
    let start = Instant::now();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(seed);
    shuffle_rng.set_stream(SHUFFLE_STREAM);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(seed);
    dropout_rng.set_stream(DROPOUT_STREAM);
    let mut opt = Adam::new(config.optimizer);
    let n_transformer_layers = model.transformer().map_or(0, |st| st.layer_count());
    let lr_scales: Vec<f64> = (0..model.named_layers().len())
        .map(|k| if k < n_transformer_layers { config.transformer_lr_scale } else { 1.0 })
        .collect();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut epochs = Vec::with_capacity(config.epochs);
    let mut best: Option<(usize, f64, Model<F>)> = None;
    let mut status = TrainStatus::Completed;
    let mut overall_max: Option<f64> = None;

    'epochs: for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut epoch_max: Option<f64> = None;
        for (step, chunk) in order.chunks(config.batch_size).enumerate() {
            let x = train_set.gather(chunk)?;
            let labels: Vec<u8> = chunk.iter().map(|&i| train_set.labels()[i]).collect();
            let (probs, cache) = model.forward(&x, true, &mut dropout_rng)?;
            if let Some(params) = cache.transform_params() {
                let m = params
                    .iter()
                    .map(|p| p.max_abs().to_f64_lossy())
                    .fold(0.0, f64::max);
                epoch_max = Some(epoch_max.map_or(m, |e: f64| e.max(m)));
                overall_max = Some(overall_max.map_or(m, |e: f64| e.max(m)));
            }
            let (loss, grad) = bce_loss(&probs, &labels)?;
            let loss = loss.to_f64_lossy();
            if !loss.is_finite() {
                status = TrainStatus::Diverged {
                    epoch,
                    step,
                    reason: "non-finite training loss".into(),
                };
                break 'epochs;
            }
            loss_sum += loss * chunk.len() as f64;
            model.zero_grad();
            model.backward(cache, &grad)?;
            if !grads_finite(&model) {
                status = TrainStatus::Diverged {
                    epoch,
                    step,
                    reason: "non-finite gradient".into(),
                };
                break 'epochs;
            }
            opt.step_scaled(model.layers_mut(), &lr_scales);
        }
        let scores = predict_f64(&model, validation, config.eval_batch_size)?;
        if scores.iter().any(|s| !s.is_finite()) {
            status = TrainStatus::Diverged {
                epoch,
                step: 0,
                reason: "non-finite validation prediction".into(),
            };
            break;
        }
        let val_auroc = auroc(&scores, validation.labels())?;
        epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            val_auroc,
            max_abs_transform_param: epoch_max,
        });
        if best.as_ref().is_none_or(|(_, b, _)| val_auroc > *b) {
            best = Some((epoch, val_auroc, model.clone()));
        }
    }

    let (best_epoch, best_val_auroc, best_model) = match best {
        Some((e, a, m)) => (Some(e), Some(a), Some(m)),
        None => (None, None, None),
    };
    Ok(TrainOutcome {
        report: TrainReport {
            variant: model.variant(),
            seed,
            config: *config,
            epochs,
            best_epoch,
            best_val_auroc,
            status,
            max_abs_transform_param: overall_max,
            wall_clock_secs: start.elapsed().as_secs_f64(),
            checkpoint: None,
        },
        best: best_model,
        last: model,
    })
}
