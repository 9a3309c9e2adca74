//! Two-class benchmark with known affine nuisances.
//!
//! Each class has a fixed smooth template per channel: a sine carrier plus a
//! Gaussian bump pattern (one bump for class 0, two bumps of equal total
//! energy for class 1). Every example is the template warped in time and
//! value by its own random affine nuisance,
//!
//! ```text
//! x(t') = amplitude * template((t' - phase_shift) / time_scale) + offset + noise
//! ```
//!
//! on normalized time `t'` in `[-1, 1]`. The inverse of that nuisance is
//! exactly a sequence transform with `theta = (time_scale, phase_shift)` and
//! `phi = (1/amplitude, -offset/amplitude)`.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::SequenceBatch;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const SYNTHETIC_FORMAT: &str = "seqtrans-synthetic";
pub const SYNTHETIC_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TemplateSpec {
    /// Carrier periods across the normalized window `[-1, 1]`.
    pub carrier_cycles: f64,
    pub carrier_amplitude: f64,
    /// Height of the single class-0 bump; class-1 bumps are scaled to equal energy.
    pub bump_height: f64,
    /// Standard deviation of each bump in normalized time.
    pub bump_width: f64,
    /// Distance between the two class-1 bump centres in normalized time.
    pub bump_separation: f64,
    /// Bump gain per channel, cycled when there are more channels than gains.
    pub channel_gains: Vec<f64>,
}

impl Default for TemplateSpec {
    fn default() -> Self {
        Self {
            carrier_cycles: 3.0,
            carrier_amplitude: 1.0,
            bump_height: 2.0,
            bump_width: 0.1,
            bump_separation: 0.25,
            channel_gains: vec![1.0, 0.8, -0.6, 0.5],
        }
    }
}

impl TemplateSpec {
    /// Height of each class-1 bump so both classes carry the same bump energy
    /// on the real line.
    pub fn double_bump_height(&self) -> f64 {
        let a = self.bump_separation / 2.0;
        let overlap = (-(a * a) / (self.bump_width * self.bump_width)).exp();
        self.bump_height / (2.0 * (1.0 + overlap)).sqrt()
    }

    /// Noise-free template value of `channel` for `class` at normalized time `tau`.
    pub fn value(&self, class: u8, channel: usize, tau: f64) -> f64 {
        let gain = self.channel_gains[channel % self.channel_gains.len()];
        let carrier = self.carrier_amplitude
            * (PI * self.carrier_cycles * (tau + 1.0) + channel as f64 * PI / 2.0).sin();
        let g = |c: f64| {
            let z = (tau - c) / self.bump_width;
            (-0.5 * z * z).exp()
        };
        let bumps = if class == 0 {
            self.bump_height * g(0.0)
        } else {
            let a = self.bump_separation / 2.0;
            self.double_bump_height() * (g(-a) + g(a))
        };
        carrier + gain * bumps
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub n_per_class: usize,
    pub channels: usize,
    pub length: usize,
    pub template: TemplateSpec,
    /// Uniform ranges `[low, high]` of the per-example nuisance.
    pub time_scale: (f64, f64),
    pub phase_shift: (f64, f64),
    pub amplitude: (f64, f64),
    pub offset: (f64, f64),
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_per_class: 1000,
            channels: 4,
            length: 48,
            template: TemplateSpec::default(),
            time_scale: (0.7, 1.4),
            phase_shift: (-0.3, 0.3),
            amplitude: (0.6, 1.6),
            offset: (-0.5, 0.5),
            noise_std: 1.5,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_per_class == 0 || self.channels == 0 {
            return Err(Error::config("synthetic spec needs n_per_class > 0 and channels > 0"));
        }
        if self.length < 16 {
            return Err(Error::config(format!(
                "synthetic length must be at least 16, got {}",
                self.length
            )));
        }
        for (name, (lo, hi)) in [
            ("time_scale", self.time_scale),
            ("phase_shift", self.phase_shift),
            ("amplitude", self.amplitude),
            ("offset", self.offset),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::config(format!("{name} range [{lo}, {hi}] is invalid")));
            }
        }
        if self.time_scale.0 <= 0.0 {
            return Err(Error::config("time_scale must be positive"));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::config("noise_std must be finite and non-negative"));
        }
        let t = &self.template;
        if t.channel_gains.is_empty() || !(t.bump_width > 0.0) {
            return Err(Error::config("template needs channel gains and a positive bump width"));
        }
        Ok(())
    }
}

/// Ground-truth nuisance applied to one example.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Nuisance {
    pub time_scale: f64,
    pub phase_shift: f64,
    pub amplitude: f64,
    pub offset: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticDataset {
    pub spec: SyntheticSpec,
    pub batch: SequenceBatch<f64>,
    pub nuisance: Vec<Nuisance>,
}

fn uniform<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Examples alternate class 0, class 1, ...; ids are `syn-000000`, ...
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_std).map_err(|e| Error::config(e.to_string()))?;
    let n = 2 * spec.n_per_class;
    let (d, t) = (spec.channels, spec.length);
    let mut values = Vec::with_capacity(n * d * t);
    let mut labels = Vec::with_capacity(n);
    let mut nuisance = Vec::with_capacity(n);
    for i in 0..n {
        let class = (i % 2) as u8;
        let nu = Nuisance {
            time_scale: uniform(&mut rng, spec.time_scale),
            phase_shift: uniform(&mut rng, spec.phase_shift),
            amplitude: uniform(&mut rng, spec.amplitude),
            offset: uniform(&mut rng, spec.offset),
        };
        for ch in 0..d {
            for j in 0..t {
                let tp = -1.0 + 2.0 * j as f64 / (t - 1) as f64;
                let tau = (tp - nu.phase_shift) / nu.time_scale;
                let mut v = nu.amplitude * spec.template.value(class, ch, tau) + nu.offset;
                if spec.noise_std > 0.0 {
                    v += noise.sample(&mut rng);
                }
                values.push(v);
            }
        }
        labels.push(class);
        nuisance.push(nu);
    }
    let ids = (0..n).map(|i| format!("syn-{i:06}")).collect();
    let channel_names = (0..d).map(|c| format!("ch{c}")).collect();
    let batch = SequenceBatch::new(Tensor::new(vec![n, d, t], values)?, labels, ids, channel_names)?;
    Ok(SyntheticDataset {
        spec: spec.clone(),
        batch,
        nuisance,
    })
}

#[derive(Serialize, Deserialize)]
struct SyntheticFile {
    format: String,
    version: u32,
    spec: SyntheticSpec,
    shape: Vec<usize>,
    channel_names: Vec<String>,
    ids: Vec<String>,
    labels: Vec<u8>,
    nuisance: Vec<Nuisance>,
    values: Vec<f64>,
}

impl SyntheticDataset {
    /// Versioned JSON container: spec echo, ground truth, tensor and labels.
    pub fn to_json(&self) -> Result<String> {
        let file = SyntheticFile {
            format: SYNTHETIC_FORMAT.into(),
            version: SYNTHETIC_VERSION,
            spec: self.spec.clone(),
            shape: self.batch.values().shape().to_vec(),
            channel_names: self.batch.channel_names().to_vec(),
            ids: self.batch.ids().to_vec(),
            labels: self.batch.labels().to_vec(),
            nuisance: self.nuisance.clone(),
            values: self.batch.values().data().to_vec(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: SyntheticFile = serde_json::from_str(s)?;
        if f.format != SYNTHETIC_FORMAT || f.version != SYNTHETIC_VERSION {
            return Err(Error::Serde(format!(
                "expected {SYNTHETIC_FORMAT} v{SYNTHETIC_VERSION}, got {} v{}",
                f.format, f.version
            )));
        }
        if f.nuisance.len() != f.labels.len() {
            return Err(Error::data("nuisance records do not match example count"));
        }
        let batch = SequenceBatch::new(Tensor::new(f.shape, f.values)?, f.labels, f.ids, f.channel_names)?;
        Ok(Self {
            spec: f.spec,
            batch,
            nuisance: f.nuisance,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}
