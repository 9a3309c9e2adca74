//! Ranking metrics, bootstrap intervals and intra-class distances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::SequenceBatch;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

fn check_inputs(scores: &[f64], labels: &[u8]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::data(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numerical("non-finite score".into()));
    }
    if labels.iter().any(|&y| y > 1) {
        return Err(Error::data("labels must be 0 or 1"));
    }
    Ok(())
}

/// Indices sorted by ascending score, followed by the `[start, end)` tie groups.
fn tie_groups(scores: &[f64]) -> (Vec<usize>, Vec<(usize, usize)>) {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut groups = Vec::new();
    let mut start = 0;
    for k in 1..=order.len() {
        if k == order.len() || scores[order[k]] != scores[order[start]] {
            groups.push((start, k));
            start = k;
        }
    }
    (order, groups)
}

/// Mann–Whitney AUROC with ties counted as one half.
///
/// Midranks are accumulated doubled, so the statistic is an exact integer
/// ratio and matches a pairwise count bit for bit.
pub fn auroc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    check_inputs(scores, labels)?;
    let pos = labels.iter().filter(|&&y| y == 1).count() as u64;
    let neg = labels.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric(
            "AUROC needs at least one positive and one negative".into(),
        ));
    }
    let (order, groups) = tie_groups(scores);
    let mut doubled_rank_sum: u64 = 0;
    for (start, end) in groups {
        // ranks start+1..=end share the midrank (start + 1 + end) / 2
        let doubled = (start + 1 + end) as u64;
        let p = order[start..end].iter().filter(|&&i| labels[i] == 1).count() as u64;
        doubled_rank_sum += doubled * p;
    }
    let doubled_u = doubled_rank_sum - pos * (pos + 1);
    Ok(doubled_u as f64 / (2 * pos * neg) as f64)
}

/// Step-wise average precision over a descending-score sweep.
///
/// Tied scores are taken as one step: the positives in a tie group are all
/// credited with the precision reached at the end of the group.
pub fn aupr(scores: &[f64], labels: &[u8]) -> Result<f64> {
    check_inputs(scores, labels)?;
    let total_pos = labels.iter().filter(|&&y| y == 1).count();
    if total_pos == 0 {
        return Err(Error::UndefinedMetric("AUPR needs at least one positive".into()));
    }
    let (order, groups) = tie_groups(scores);
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut ap = 0.0;
    for &(start, end) in groups.iter().rev() {
        let p = order[start..end].iter().filter(|&&i| labels[i] == 1).count();
        tp += p;
        fp += end - start - p;
        if p > 0 {
            ap += (p as f64 / total_pos as f64) * (tp as f64 / (tp + fp) as f64);
        }
    }
    Ok(ap)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BootstrapConfig {
    pub resamples: usize,
    pub level: f64,
    pub seed: u64,
    /// Redraws allowed per resample when the metric is undefined on it.
    pub max_redraws: usize,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            resamples: 1000,
            level: 0.95,
            seed: 0,
            max_redraws: 1000,
        }
    }
}

/// Linear-interpolated percentile of sorted values, `q` in `[0, 1]`.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Percentile bootstrap interval for `metric`.
///
/// Resample `i` draws from its own ChaCha stream, so results do not depend on
/// thread count or scheduling.
pub fn bootstrap_ci<M>(metric: M, scores: &[f64], labels: &[u8], config: &BootstrapConfig) -> Result<(f64, f64)>
where
    M: Fn(&[f64], &[u8]) -> Result<f64> + Sync,
{
    if config.resamples == 0 || !(config.level > 0.0 && config.level < 1.0) {
        return Err(Error::config(format!("invalid bootstrap settings {config:?}")));
    }
    metric(scores, labels)?;
    let n = scores.len();
    let mut values: Vec<f64> = (0..config.resamples)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(i as u64);
            let mut s = vec![0.0; n];
            let mut y = vec![0u8; n];
            for _ in 0..=config.max_redraws {
                for k in 0..n {
                    let j = rng.random_range(0..n);
                    s[k] = scores[j];
                    y[k] = labels[j];
                }
                match metric(&s, &y) {
                    Ok(v) => return Ok(v),
                    Err(Error::UndefinedMetric(_)) => continue,
                    Err(e) => return Err(e),
                }
            }
            Err(Error::UndefinedMetric(format!(
                "bootstrap resample {i} stayed undefined after {} redraws",
                config.max_redraws
            )))
        })
        .collect::<Result<_>>()?;
    values.sort_by(f64::total_cmp);
    let tail = (1.0 - config.level) / 2.0;
    Ok((percentile(&values, tail), percentile(&values, 1.0 - tail)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub auroc: f64,
    pub aupr: f64,
    pub auroc_ci: (f64, f64),
    pub aupr_ci: (f64, f64),
    pub n: usize,
    pub prevalence: f64,
    pub resamples: usize,
    pub seed: u64,
}

impl MetricsReport {
    pub fn compute(scores: &[f64], labels: &[u8], bootstrap: &BootstrapConfig) -> Result<Self> {
        let n = labels.len();
        Ok(Self {
            auroc: auroc(scores, labels)?,
            aupr: aupr(scores, labels)?,
            auroc_ci: bootstrap_ci(auroc, scores, labels, bootstrap)?,
            aupr_ci: bootstrap_ci(aupr, scores, labels, bootstrap)?,
            n,
            prevalence: labels.iter().filter(|&&y| y == 1).count() as f64 / n as f64,
            resamples: bootstrap.resamples,
            seed: bootstrap.seed,
        })
    }
}

/// Mean intra-class distance per class; `None` where a class has fewer than two members.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassDistances {
    pub positive: Option<f64>,
    pub negative: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceReport {
    pub original: ClassDistances,
    pub transformed: ClassDistances,
}

/// Mean Euclidean distance over unordered pairs of rows.
pub fn mean_pairwise_distance(rows: &[&[f64]]) -> Option<f64> {
    let m = rows.len();
    if m < 2 {
        return None;
    }
    let total: f64 = (0..m)
        .into_par_iter()
        .map(|i| {
            (i + 1..m)
                .map(|j| {
                    rows[i]
                        .iter()
                        .zip(rows[j])
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt()
                })
                .sum::<f64>()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum();
    Some(total / (m * (m - 1) / 2) as f64)
}

/// Flattens every example (all channels, masks included) and averages
/// same-class pairwise distances.
pub fn intra_class_distance<F: Scalar>(batch: &SequenceBatch<F>) -> ClassDistances {
    let flat: Vec<Vec<f64>> = (0..batch.len())
        .map(|i| batch.values().example(i).iter().map(|v| v.to_f64_lossy()).collect())
        .collect();
    let class = |c: u8| {
        let rows: Vec<&[f64]> = flat
            .iter()
            .zip(batch.labels())
            .filter(|(_, &y)| y == c)
            .map(|(r, _)| r.as_slice())
            .collect();
        mean_pairwise_distance(&rows)
    };
    ClassDistances {
        positive: class(1),
        negative: class(0),
    }
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::data("pearson needs two equal-length series of length >= 2"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedMetric("correlation with a constant series".into()));
    }
    Ok(sxy / (sxx * syy).sqrt())
}
