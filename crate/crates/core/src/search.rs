//! Random hyperparameter search over the classifier and batch settings.

use std::path::Path;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{Model, ModelConfig, ModelVariant};
use crate::data::SequenceBatch;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::train::{train, TrainConfig};

const SAMPLING_STREAM: u64 = 7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HyperparamSpace {
    pub batch_sizes: Vec<usize>,
    pub dropouts: Vec<f64>,
    pub depths: Vec<usize>,
    pub hidden_widths: Vec<usize>,
    pub trials: usize,
    pub max_epochs: usize,
}

impl Default for HyperparamSpace {
    fn default() -> Self {
        Self {
            batch_sizes: vec![8, 15, 30],
            dropouts: (0..10).map(|k| k as f64 / 10.0).collect(),
            depths: vec![2, 3, 4],
            hidden_widths: vec![50, 100, 250, 500],
            trials: 20,
            max_epochs: 10,
        }
    }
}

impl HyperparamSpace {
    pub fn validate(&self) -> Result<()> {
        if self.batch_sizes.is_empty()
            || self.dropouts.is_empty()
            || self.depths.is_empty()
            || self.hidden_widths.is_empty()
        {
            return Err(Error::config("every search dimension needs at least one value"));
        }
        if self.trials == 0 || self.max_epochs == 0 {
            return Err(Error::config("trials and max_epochs must be positive"));
        }
        Ok(())
    }

    /// Configuration of trial `id`; depends only on the master seed and `id`.
    pub fn sample(&self, master_seed: u64, id: usize) -> TrialConfig {
        let seed = master_seed.wrapping_add(id as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(SAMPLING_STREAM);
        TrialConfig {
            trial_id: id,
            batch_size: *self.batch_sizes.choose(&mut rng).expect("validated"),
            dropout: *self.dropouts.choose(&mut rng).expect("validated"),
            depth: *self.depths.choose(&mut rng).expect("validated"),
            hidden_width: *self.hidden_widths.choose(&mut rng).expect("validated"),
            seed,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub trial_id: usize,
    pub batch_size: usize,
    pub dropout: f64,
    pub depth: usize,
    pub hidden_width: usize,
    pub seed: u64,
}

impl TrialConfig {
    pub fn apply(&self, model: &ModelConfig, training: &TrainConfig, max_epochs: usize) -> (ModelConfig, TrainConfig) {
        let mut m = model.clone();
        m.classifier.depth = self.depth;
        m.classifier.hidden = self.hidden_width;
        m.classifier.dropout = Some(self.dropout);
        let t = TrainConfig {
            batch_size: self.batch_size,
            epochs: training.epochs.min(max_epochs),
            ..*training
        };
        (m, t)
    }
}

/// One row of the trial table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_id: usize,
    pub batch_size: usize,
    pub dropout: f64,
    pub depth: usize,
    pub hidden_width: usize,
    pub best_val_auroc: Option<f64>,
    pub best_epoch: Option<usize>,
    /// `completed`, `diverged`, or `failed: <reason>`.
    pub status: String,
    pub seed: u64,
}

impl TrialRecord {
    pub fn config(&self) -> TrialConfig {
        TrialConfig {
            trial_id: self.trial_id,
            batch_size: self.batch_size,
            dropout: self.dropout,
            depth: self.depth,
            hidden_width: self.hidden_width,
            seed: self.seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchResult {
    /// Best validation AUROC first; trials without one go last, by id.
    pub ranked: Vec<TrialRecord>,
}

impl SearchResult {
    pub fn best(&self) -> Option<&TrialRecord> {
        self.ranked.first().filter(|r| r.best_val_auroc.is_some())
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::io::write_csv(path, &self.ranked)
    }
}

fn run_trial<F: Scalar>(
    cfg: TrialConfig,
    space: &HyperparamSpace,
    variant: ModelVariant,
    model: &ModelConfig,
    training: &TrainConfig,
    train_set: &SequenceBatch<F>,
    validation: &SequenceBatch<F>,
) -> TrialRecord {
    let (mc, tc) = cfg.apply(model, training, space.max_epochs);
    let outcome = Model::new(variant, &mc, train_set.channels(), train_set.steps(), cfg.seed)
        .and_then(|m| train(m, train_set, validation, &tc, cfg.seed));
    let (best_val_auroc, best_epoch, status) = match outcome {
        Ok(o) => (o.report.best_val_auroc, o.report.best_epoch, o.report.status.label().to_string()),
        Err(e) => (None, None, format!("failed: {e}")),
    };
    TrialRecord {
        trial_id: cfg.trial_id,
        batch_size: cfg.batch_size,
        dropout: cfg.dropout,
        depth: cfg.depth,
        hidden_width: cfg.hidden_width,
        best_val_auroc,
        best_epoch,
        status,
        seed: cfg.seed,
    }
}

/// Trains `space.trials` independently sampled configurations in parallel.
///
/// Each trial's configuration and seeds derive from `master_seed + trial_id`
/// alone, so the table does not depend on scheduling. Failed trials are
/// recorded rather than aborting the search.
pub fn random_search<F: Scalar>(
    space: &HyperparamSpace,
    variant: ModelVariant,
    model: &ModelConfig,
    training: &TrainConfig,
    train_set: &SequenceBatch<F>,
    validation: &SequenceBatch<F>,
    master_seed: u64,
) -> Result<SearchResult> {
    space.validate()?;
    training.validate()?;
    let mut ranked: Vec<TrialRecord> = (0..space.trials)
        .into_par_iter()
        .map(|id| {
            let cfg = space.sample(master_seed, id);
            run_trial(cfg, space, variant, model, training, train_set, validation)
        })
        .collect();
    ranked.sort_by(|a, b| match (a.best_val_auroc, b.best_val_auroc) {
        (Some(x), Some(y)) => y.total_cmp(&x).then(a.trial_id.cmp(&b.trial_id)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.trial_id.cmp(&b.trial_id),
    });
    Ok(SearchResult { ranked })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samples_stay_in_their_sets() {
        let space = HyperparamSpace::default();
        for id in 0..200 {
            let c = space.sample(42, id);
            assert!(space.batch_sizes.contains(&c.batch_size));
            assert!(space.dropouts.contains(&c.dropout));
            assert!(space.depths.contains(&c.depth));
            assert!(space.hidden_widths.contains(&c.hidden_width));
            assert_eq!(c.seed, 42 + id as u64);
        }
    }

    #[test]
    fn sampling_is_reproducible_and_order_free() {
        let space = HyperparamSpace::default();
        let a: Vec<_> = (0..20).map(|i| space.sample(7, i)).collect();
        let b: Vec<_> = (0..20).rev().map(|i| space.sample(7, i)).collect();
        assert_eq!(a, b.into_iter().rev().collect::<Vec<_>>());
        assert!(a.iter().any(|c| c.batch_size != a[0].batch_size || c.depth != a[0].depth));
    }

    #[test]
    fn trial_applies_to_configs() {
        let c = TrialConfig {
            trial_id: 0,
            batch_size: 30,
            dropout: 0.4,
            depth: 3,
            hidden_width: 250,
            seed: 1,
        };
        let (m, t) = c.apply(&ModelConfig::default(), &TrainConfig { epochs: 25, ..Default::default() }, 10);
        assert_eq!((m.classifier.depth, m.classifier.hidden), (3, 250));
        assert_eq!(m.classifier.dropout, Some(0.4));
        assert_eq!((t.batch_size, t.epochs), (30, 10));
    }
}
