use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SequenceBatch;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitFractions {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.70,
            validation: 0.15,
            test: 0.15,
        }
    }
}

impl SplitFractions {
    /// Split sizes for `n` examples: validation and test are rounded, train takes the rest.
    pub fn sizes(&self, n: usize) -> Result<[usize; 3]> {
        let parts = [self.train, self.validation, self.test];
        if parts.iter().any(|f| !(0.0..=1.0).contains(f))
            || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(Error::config(format!("split fractions {parts:?} must be in [0,1] and sum to 1")));
        }
        let val = (n as f64 * self.validation).round() as usize;
        let test = (n as f64 * self.test).round() as usize;
        let train = n
            .checked_sub(val + test)
            .ok_or_else(|| Error::config("split fractions exceed the sample"))?;
        let sizes = [train, val, test];
        if sizes.contains(&0) {
            return Err(Error::data(format!(
                "{n} examples give split sizes {sizes:?}; every split needs at least one example"
            )));
        }
        Ok(sizes)
    }
}

/// Largest-remainder apportionment of `count` items proportional to `sizes`;
/// ties go to the earlier split.
fn apportion(count: usize, sizes: [usize; 3], total: usize) -> [usize; 3] {
    let exact: Vec<f64> = sizes
        .iter()
        .map(|&s| count as f64 * s as f64 / total as f64)
        .collect();
    let mut q: [usize; 3] = [0; 3];
    for k in 0..3 {
        q[k] = exact[k].floor() as usize;
    }
    let mut left = count - q.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for k in order {
        if left == 0 {
            break;
        }
        q[k] += 1;
        left -= 1;
    }
    q
}

/// Partitions example indices into (train, validation, test), each sorted.
///
/// Stratified mode apportions each class separately, keeping every split's
/// positive count within one example of its proportional share.
pub fn split_indices(
    labels: &[u8],
    fractions: SplitFractions,
    seed: u64,
    stratified: bool,
) -> Result<[Vec<usize>; 3]> {
    let n = labels.len();
    let sizes = fractions.sizes(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: [Vec<usize>; 3] = Default::default();
    if stratified {
        let mut pos: Vec<usize> = (0..n).filter(|&i| labels[i] == 1).collect();
        let mut neg: Vec<usize> = (0..n).filter(|&i| labels[i] != 1).collect();
        pos.shuffle(&mut rng);
        neg.shuffle(&mut rng);
        let pq = apportion(pos.len(), sizes, n);
        let mut pi = pos.into_iter();
        let mut ni = neg.into_iter();
        for k in 0..3 {
            out[k].extend(pi.by_ref().take(pq[k]));
            out[k].extend(ni.by_ref().take(sizes[k] - pq[k]));
        }
    } else {
        let mut all: Vec<usize> = (0..n).collect();
        all.shuffle(&mut rng);
        let mut it = all.into_iter();
        for k in 0..3 {
            out[k].extend(it.by_ref().take(sizes[k]));
        }
    }
    for part in &mut out {
        part.sort_unstable();
    }
    Ok(out)
}

pub fn split<F: Scalar>(
    batch: &SequenceBatch<F>,
    fractions: SplitFractions,
    seed: u64,
    stratified: bool,
) -> Result<(SequenceBatch<F>, SequenceBatch<F>, SequenceBatch<F>)> {
    let [tr, va, te] = split_indices(batch.labels(), fractions, seed, stratified)?;
    Ok((batch.subset(&tr)?, batch.subset(&va)?, batch.subset(&te)?))
}
