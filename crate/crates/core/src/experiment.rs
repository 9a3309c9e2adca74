//! Train-and-evaluate runs on fixed splits, reported as metrics rows.

use serde::{Deserialize, Serialize};

use crate::classifier::{Model, ModelConfig, ModelVariant};
use crate::data::{split, SequenceBatch, SplitFractions};
use crate::error::Result;
use crate::metrics::{BootstrapConfig, MetricsReport};
use crate::scalar::Scalar;
use crate::train::{predict_f64, train, TrainConfig, TrainOutcome};

#[derive(Clone, Debug, PartialEq)]
pub struct Splits<F> {
    pub train: SequenceBatch<F>,
    pub validation: SequenceBatch<F>,
    pub test: SequenceBatch<F>,
}

impl<F: Scalar> Splits<F> {
    pub fn new(batch: &SequenceBatch<F>, fractions: SplitFractions, seed: u64, stratified: bool) -> Result<Self> {
        let (train, validation, test) = split(batch, fractions, seed, stratified)?;
        Ok(Self {
            train,
            validation,
            test,
        })
    }

    pub fn named(&self) -> [(&'static str, &SequenceBatch<F>); 3] {
        [
            ("train", &self.train),
            ("validation", &self.validation),
            ("test", &self.test),
        ]
    }

    pub fn get(&self, name: &str) -> Option<&SequenceBatch<F>> {
        self.named().into_iter().find(|(n, _)| *n == name).map(|(_, b)| b)
    }
}

/// One line of a metrics table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub variant: String,
    pub split: String,
    pub auroc: f64,
    pub auroc_lo: f64,
    pub auroc_hi: f64,
    pub aupr: f64,
    pub aupr_lo: f64,
    pub aupr_hi: f64,
    pub n: usize,
    pub prevalence: f64,
    pub seed: u64,
}

impl MetricsRow {
    pub fn new(variant: ModelVariant, split: &str, m: &MetricsReport, seed: u64) -> Self {
        Self {
            variant: variant.to_string(),
            split: split.to_string(),
            auroc: m.auroc,
            auroc_lo: m.auroc_ci.0,
            auroc_hi: m.auroc_ci.1,
            aupr: m.aupr,
            aupr_lo: m.aupr_ci.0,
            aupr_hi: m.aupr_ci.1,
            n: m.n,
            prevalence: m.prevalence,
            seed,
        }
    }
}

#[derive(Clone, Debug)]
pub struct VariantRun<F> {
    pub outcome: TrainOutcome<F>,
    /// Metrics of the selected model per split; empty if training diverged
    /// before any epoch finished.
    pub metrics: Vec<(String, MetricsReport)>,
}

impl<F: Scalar> VariantRun<F> {
    pub fn split_metrics(&self, split: &str) -> Option<&MetricsReport> {
        self.metrics.iter().find(|(s, _)| s == split).map(|(_, m)| m)
    }

    pub fn rows(&self) -> Vec<MetricsRow> {
        let r = &self.outcome.report;
        self.metrics
            .iter()
            .map(|(s, m)| MetricsRow::new(r.variant, s, m, r.seed))
            .collect()
    }
}

/// Builds the variant from `seed`, trains it on `splits.train`, selects by
/// validation AUROC, and scores every split with bootstrap intervals.
pub fn run_variant<F: Scalar>(
    variant: ModelVariant,
    model: &ModelConfig,
    training: &TrainConfig,
    splits: &Splits<F>,
    seed: u64,
    bootstrap: &BootstrapConfig,
) -> Result<VariantRun<F>> {
    let m = Model::new(variant, model, splits.train.channels(), splits.train.steps(), seed)?;
    let outcome = train(m, &splits.train, &splits.validation, training, seed)?;
    let mut metrics = Vec::new();
    if let Some(best) = &outcome.best {
        for (name, batch) in splits.named() {
            let scores = predict_f64(best, batch, training.eval_batch_size)?;
            metrics.push((name.to_string(), MetricsReport::compute(&scores, batch.labels(), bootstrap)?));
        }
    }
    Ok(VariantRun { outcome, metrics })
}
