//! Labelled multichannel sequences, their generators and loaders.

mod ingest;
mod split;
mod synthetic;

pub use ingest::{
    fit_schema, fit_schema_from_readers, ingest_events, ingest_from_readers, BinRule, DeclaredKind,
    FeatureDecl, FeatureKind, FeatureSchema, FeatureSpec, IngestOptions, IngestReport,
    SCHEMA_FORMAT, SCHEMA_VERSION,
};
pub use split::{split, split_indices, SplitFractions};
pub use synthetic::{
    generate_synthetic, Nuisance, SyntheticDataset, SyntheticSpec, TemplateSpec, SYNTHETIC_FORMAT,
    SYNTHETIC_VERSION,
};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// `n` examples of `d` channels by `T` steps with binary labels.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceBatch<F> {
    values: Tensor<F>,
    labels: Vec<u8>,
    ids: Vec<String>,
    channel_names: Vec<String>,
}

impl<F: Scalar> SequenceBatch<F> {
    pub fn new(
        values: Tensor<F>,
        labels: Vec<u8>,
        ids: Vec<String>,
        channel_names: Vec<String>,
    ) -> Result<Self> {
        let (n, d, _) = values.dims3()?;
        if labels.len() != n || ids.len() != n {
            return Err(Error::data(format!(
                "{n} examples but {} labels and {} ids",
                labels.len(),
                ids.len()
            )));
        }
        if channel_names.len() != d {
            return Err(Error::data(format!(
                "{d} channels but {} channel names",
                channel_names.len()
            )));
        }
        if let Some(y) = labels.iter().find(|&&y| y > 1) {
            return Err(Error::data(format!("label {y} is not 0 or 1")));
        }
        if !values.all_finite() {
            return Err(Error::data("non-finite values in batch"));
        }
        Ok(Self {
            values,
            labels,
            ids,
            channel_names,
        })
    }

    pub fn values(&self) -> &Tensor<F> {
        &self.values
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn steps(&self) -> usize {
        self.values.shape()[2]
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&y| y == 1).count()
    }

    pub fn prevalence(&self) -> f64 {
        self.positives() as f64 / self.len() as f64
    }

    /// Values of the selected examples, in the given order.
    pub fn gather(&self, indices: &[usize]) -> Result<Tensor<F>> {
        let per = self.channels() * self.steps();
        let mut data = Vec::with_capacity(indices.len() * per);
        for &i in indices {
            data.extend_from_slice(self.values.example(i));
        }
        Tensor::new(vec![indices.len(), self.channels(), self.steps()], data)
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        Ok(Self {
            values: self.gather(indices)?,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            ids: indices.iter().map(|&i| self.ids[i].clone()).collect(),
            channel_names: self.channel_names.clone(),
        })
    }

    /// Same examples with different values (e.g. after a transform).
    pub fn with_values(&self, values: Tensor<F>) -> Result<Self> {
        Self::new(values, self.labels.clone(), self.ids.clone(), self.channel_names.clone())
    }

    pub fn cast<G: Scalar>(&self) -> SequenceBatch<G> {
        SequenceBatch {
            values: self.values.cast(),
            labels: self.labels.clone(),
            ids: self.ids.clone(),
            channel_names: self.channel_names.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch() -> SequenceBatch<f64> {
        let v: Vec<f64> = (0..12).map(|k| k as f64).collect();
        SequenceBatch::new(
            Tensor::new(vec![3, 2, 2], v).unwrap(),
            vec![0, 1, 1],
            vec!["a".into(), "b".into(), "c".into()],
            vec!["x".into(), "y".into()],
        )
        .unwrap()
    }

    #[test]
    fn validates_contract() {
        let t = Tensor::<f64>::zeros(&[2, 1, 3]);
        assert!(SequenceBatch::new(t.clone(), vec![0, 2], vec!["a".into(), "b".into()], vec!["x".into()]).is_err());
        assert!(SequenceBatch::new(t.clone(), vec![0], vec!["a".into()], vec!["x".into()]).is_err());
        let mut bad = t.clone();
        bad.data_mut()[0] = f64::NAN;
        assert!(SequenceBatch::new(bad, vec![0, 1], vec!["a".into(), "b".into()], vec!["x".into()]).is_err());
    }

    #[test]
    fn subset_keeps_rows_together() {
        let b = batch();
        let s = b.subset(&[2, 0]).unwrap();
        assert_eq!(s.ids(), &["c".to_string(), "a".to_string()]);
        assert_eq!(s.labels(), &[1, 0]);
        assert_eq!(s.values().data(), &[8., 9., 10., 11., 0., 1., 2., 3.]);
        assert!((b.prevalence() - 2.0 / 3.0).abs() < 1e-15);
    }
}
