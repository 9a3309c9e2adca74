//! Input-conditioned affine temporal resampling and magnitude transforms.
//!
//! A small CNN (the transformation network) maps each example to four numbers
//! `(theta1, theta0, phi1, phi0)`. Target time `t'` in normalized coordinates
//! `[-1, 1]` reads the source at `t = theta1 * t' + theta0`, using linear
//! interpolation between the two neighbouring samples and last-value padding
//! outside the signal. The resampled values are then mapped through
//! `x' = phi1 * x + phi0`. Every channel of an example shares the same four
//! parameters.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{relu, relu_backward, Conv1d, Conv1dCache, Dense, DenseCache, MaxPool1d, MaxPoolCache, ReluCache};
use crate::scalar::Scalar;
use crate::tensor::{LayerParams, Tensor};

/// Per-example temporal (`theta`) and magnitude (`phi`) affine parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransformParams<F> {
    pub theta1: F,
    pub theta0: F,
    pub phi1: F,
    pub phi0: F,
}

impl<F: Scalar> TransformParams<F> {
    pub fn identity() -> Self {
        Self {
            theta1: F::one(),
            theta0: F::zero(),
            phi1: F::one(),
            phi0: F::zero(),
        }
    }

    pub fn new(theta1: F, theta0: F, phi1: F, phi0: F) -> Self {
        Self {
            theta1,
            theta0,
            phi1,
            phi0,
        }
    }

    pub fn to_array(self) -> [F; 4] {
        [self.theta1, self.theta0, self.phi1, self.phi0]
    }

    pub fn from_array(a: [F; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn max_abs(&self) -> F {
        self.to_array().iter().fold(F::zero(), |m, v| m.max(v.abs()))
    }
}

// ---------------------------------------------------------------------------
// leaky clamp
// ---------------------------------------------------------------------------

/// Piecewise-linear saturation: slope 1 on `[-bound, bound]`, `slope` outside.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeakyClamp {
    pub bound: f64,
    pub slope: f64,
}

impl Default for LeakyClamp {
    fn default() -> Self {
        Self {
            bound: 2.0,
            slope: 0.01,
        }
    }
}

impl LeakyClamp {
    pub fn validate(&self) -> Result<()> {
        if !(self.bound > 0.0) || !(self.slope > 0.0 && self.slope < 1.0) {
            return Err(Error::config(format!(
                "leaky clamp needs bound > 0 and 0 < slope < 1, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn apply<F: Scalar>(&self, v: F) -> F {
        leaky_clamp(v, F::lit(self.bound), F::lit(self.slope))
    }

    pub fn derivative<F: Scalar>(&self, v: F) -> F {
        if v.abs() <= F::lit(self.bound) {
            F::one()
        } else {
            F::lit(self.slope)
        }
    }
}

pub fn leaky_clamp<F: Scalar>(value: F, bound: F, slope: F) -> F {
    if value > bound {
        bound + slope * (value - bound)
    } else if value < -bound {
        -bound + slope * (value + bound)
    } else {
        value
    }
}

// ---------------------------------------------------------------------------
// sampling grid and temporal resampling
// ---------------------------------------------------------------------------

/// Normalized target positions `t'_j = -1 + 2j/(T'-1)` and, per example, the
/// source positions `t = theta1 * t' + theta0` they read from.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplingGrid<F> {
    target: Vec<F>,
    source: Vec<F>,
    theta: Vec<(F, F)>,
}

impl<F: Scalar> SamplingGrid<F> {
    pub fn n(&self) -> usize {
        self.theta.len()
    }

    pub fn t_out(&self) -> usize {
        self.target.len()
    }

    pub fn target_coords(&self) -> &[F] {
        &self.target
    }

    /// Source coordinates of example `i`, one per target step.
    pub fn source_coords(&self, i: usize) -> &[F] {
        let t = self.t_out();
        &self.source[i * t..(i + 1) * t]
    }

    pub fn theta(&self, i: usize) -> (F, F) {
        self.theta[i]
    }

    /// Fractional source index `(t + 1)/2 * (t_in - 1)` for target step `j`.
    ///
    /// Evaluated as `c_s*theta1*(j - c_t)/c_t + c_s*(theta0 + 1)` with
    /// `c = (len - 1)/2`, which lands exactly on `j` for the identity
    /// transform when `t_in == t_out`.
    pub fn fractional_index(&self, i: usize, j: usize, t_in: usize) -> F {
        let (theta1, theta0) = self.theta[i];
        let c_s = F::lit((t_in as f64 - 1.0) / 2.0);
        let c_t = F::lit((self.t_out() as f64 - 1.0) / 2.0);
        let offset = F::lit(j as f64) - c_t;
        c_s * theta1 * offset / c_t + c_s * (theta0 + F::one())
    }
}

pub fn make_grid<F: Scalar>(params: &[TransformParams<F>], t_out: usize) -> Result<SamplingGrid<F>> {
    if t_out < 2 {
        return Err(Error::config(format!("grid length must be at least 2, got {t_out}")));
    }
    let denom = F::lit((t_out - 1) as f64);
    let two = F::lit(2.0);
    let target: Vec<F> = (0..t_out)
        .map(|j| -F::one() + two * F::lit(j as f64) / denom)
        .collect();
    let mut source = Vec::with_capacity(params.len() * t_out);
    for p in params {
        source.extend(target.iter().map(|&tp| p.theta1 * tp + p.theta0));
    }
    Ok(SamplingGrid {
        target,
        source,
        theta: params.iter().map(|p| (p.theta1, p.theta0)).collect(),
    })
}

/// Neighbour indices (clamped to the signal) and interpolation weight for a
/// fractional index. The right neighbour is always `floor(u) + 1`, so at
/// integer positions the reported slope is the right-hand one.
#[inline]
fn neighbours<F: Scalar>(u: F, t_in: usize) -> (usize, usize, F) {
    let floor = u.floor();
    let frac = u - floor;
    let last = t_in as isize - 1;
    let i0 = floor.to_isize().unwrap_or(if u > F::zero() { isize::MAX } else { isize::MIN });
    let lo = i0.clamp(0, last) as usize;
    let hi = i0.saturating_add(1).clamp(0, last) as usize;
    (lo, hi, frac)
}

/// Resamples every channel of each example along its grid.
///
/// Interpolates as `x[lo] + frac * (x[hi] - x[lo])`, which returns a sample
/// bit-exactly whenever both neighbours hold the same value (constant
/// stretches and padded regions).
pub fn temporal_resample<F: Scalar>(x: &Tensor<F>, grid: &SamplingGrid<F>) -> Result<Tensor<F>> {
    let (n, d, t_in) = x.dims3()?;
    if grid.n() != n {
        return Err(Error::config(format!(
            "grid built for {} examples, batch has {n}",
            grid.n()
        )));
    }
    let t_out = grid.t_out();
    let mut out = Vec::with_capacity(n * d * t_out);
    for i in 0..n {
        let taps: Vec<(usize, usize, F)> = (0..t_out)
            .map(|j| neighbours(grid.fractional_index(i, j, t_in), t_in))
            .collect();
        for row in x.example(i).chunks_exact(t_in) {
            out.extend(
                taps.iter()
                    .map(|&(lo, hi, f)| row[lo] + f * (row[hi] - row[lo])),
            );
        }
    }
    Tensor::new(vec![n, d, t_out], out)
}

/// Gradients of the resampler: w.r.t. the input values and, per example,
/// w.r.t. `(theta1, theta0)`.
pub fn temporal_resample_backward<F: Scalar>(
    x: &Tensor<F>,
    grid: &SamplingGrid<F>,
    grad_out: &Tensor<F>,
) -> Result<(Tensor<F>, Vec<(F, F)>)> {
    let (n, d, t_in) = x.dims3()?;
    let t_out = grid.t_out();
    if grad_out.shape() != [n, d, t_out] || grid.n() != n {
        return Err(Error::config("resample gradient does not match forward shapes"));
    }
    let c_s = F::lit((t_in as f64 - 1.0) / 2.0);
    let mut gx = Tensor::zeros(&[n, d, t_in]);
    let mut gtheta = Vec::with_capacity(n);
    let g = grad_out.data();
    for i in 0..n {
        let mut g1 = F::zero();
        let mut g0 = F::zero();
        let target = grid.target_coords();
        for j in 0..t_out {
            let (lo, hi, f) = neighbours(grid.fractional_index(i, j, t_in), t_in);
            for ch in 0..d {
                let row = (i * d + ch) * t_in;
                let gv = g[(i * d + ch) * t_out + j];
                let gxd = gx.data_mut();
                gxd[row + lo] += (F::one() - f) * gv;
                gxd[row + hi] += f * gv;
                let xd = x.data();
                let slope = xd[row + hi] - xd[row + lo];
                g0 += gv * slope;
                g1 += gv * slope * target[j];
            }
        }
        gtheta.push((g1 * c_s, g0 * c_s));
    }
    Ok((gx, gtheta))
}

// ---------------------------------------------------------------------------
// magnitude transform
// ---------------------------------------------------------------------------

pub fn magnitude_transform<F: Scalar>(x: &Tensor<F>, params: &[TransformParams<F>]) -> Result<Tensor<F>> {
    let (n, _, _) = x.dims3()?;
    if params.len() != n {
        return Err(Error::config(format!(
            "{} parameter sets for {n} examples",
            params.len()
        )));
    }
    let per = x.len() / n;
    let mut out = x.clone();
    for (chunk, p) in out.data_mut().chunks_exact_mut(per).zip(params) {
        for v in chunk {
            *v = p.phi1 * *v + p.phi0;
        }
    }
    Ok(out)
}

/// Returns the input gradient and per-example `(d/dphi1, d/dphi0)`.
pub fn magnitude_transform_backward<F: Scalar>(
    x: &Tensor<F>,
    params: &[TransformParams<F>],
    grad_out: &Tensor<F>,
) -> Result<(Tensor<F>, Vec<(F, F)>)> {
    let (n, _, _) = x.dims3()?;
    if grad_out.shape() != x.shape() || params.len() != n {
        return Err(Error::config("magnitude gradient does not match forward shapes"));
    }
    let per = x.len() / n;
    let mut gx = grad_out.clone();
    let mut gphi = Vec::with_capacity(n);
    for (i, p) in params.iter().enumerate() {
        let xs = x.example(i);
        let gs = &grad_out.data()[i * per..(i + 1) * per];
        let g1: F = xs.iter().zip(gs).map(|(&a, &b)| a * b).sum();
        let g0: F = gs.iter().copied().sum();
        gphi.push((g1, g0));
        for v in &mut gx.data_mut()[i * per..(i + 1) * per] {
            *v *= p.phi1;
        }
    }
    Ok((gx, gphi))
}

// ---------------------------------------------------------------------------
// transformation network
// ---------------------------------------------------------------------------

/// One `conv -> ReLU -> maxpool` stage.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvBlockConfig {
    pub channels: usize,
    pub kernel: usize,
    #[serde(default = "one")]
    pub stride: usize,
    #[serde(default)]
    pub pad: usize,
    #[serde(default = "two")]
    pub pool_window: usize,
    #[serde(default = "two")]
    pub pool_stride: usize,
}

fn one() -> usize {
    1
}

fn two() -> usize {
    2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransformNetConfig {
    pub blocks: Vec<ConvBlockConfig>,
    pub hidden: usize,
    /// `None` disables the saturation of the emitted parameters.
    pub clamp: Option<LeakyClamp>,
}

impl Default for TransformNetConfig {
    fn default() -> Self {
        let block = ConvBlockConfig {
            channels: 16,
            kernel: 5,
            stride: 1,
            pad: 2,
            pool_window: 2,
            pool_stride: 2,
        };
        Self {
            blocks: vec![block, block],
            hidden: 32,
            clamp: Some(LeakyClamp::default()),
        }
    }
}

/// Stack of conv blocks shared by the transformation network and the classifier.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct ConvStack<F> {
    pub(crate) convs: Vec<Conv1d<F>>,
    pub(crate) pools: Vec<MaxPool1d>,
}

#[derive(Debug)]
pub(crate) struct ConvStackCache<F> {
    stages: Vec<(Conv1dCache<F>, ReluCache, MaxPoolCache)>,
    out_shape: [usize; 3],
}

impl<F: Scalar> ConvStack<F> {
    /// Builds the stack and returns it with the flattened output width.
    pub(crate) fn new<R: Rng + ?Sized>(
        blocks: &[ConvBlockConfig],
        in_channels: usize,
        seq_len: usize,
        rng: &mut R,
    ) -> Result<(Self, usize)> {
        let mut convs = Vec::with_capacity(blocks.len());
        let mut pools = Vec::with_capacity(blocks.len());
        let (mut c, mut t) = (in_channels, seq_len);
        for (k, b) in blocks.iter().enumerate() {
            if b.channels == 0 || b.kernel == 0 || b.stride == 0 {
                return Err(Error::config(format!(
                    "block {k}: channels, kernel and stride must be positive"
                )));
            }
            let conv = Conv1d::he_init(c, b.channels, b.kernel, b.stride, b.pad, rng);
            let pool = MaxPool1d::new(b.pool_window, b.pool_stride)?;
            t = conv
                .out_len(t)
                .and_then(|t| pool.out_len(t))
                .map_err(|e| Error::config(format!("block {k}: sequence too short ({e})")))?;
            c = b.channels;
            convs.push(conv);
            pools.push(pool);
        }
        Ok((Self { convs, pools }, c * t))
    }

    pub(crate) fn forward(&self, x: &Tensor<F>) -> Result<(Tensor<F>, ConvStackCache<F>)> {
        let mut h = x.clone();
        let mut stages = Vec::with_capacity(self.convs.len());
        for (conv, pool) in self.convs.iter().zip(&self.pools) {
            let (a, cc) = conv.forward(&h)?;
            let (r, rc) = relu(&a);
            let (p, pc) = pool.forward(&r)?;
            stages.push((cc, rc, pc));
            h = p;
        }
        let (n, c, t) = h.dims3()?;
        let flat = h.reshape(vec![n, c * t])?;
        Ok((
            flat,
            ConvStackCache {
                stages,
                out_shape: [n, c, t],
            },
        ))
    }

    /// Returns the gradient w.r.t. the stack input when `input_grad` is set.
    pub(crate) fn backward(
        &mut self,
        cache: ConvStackCache<F>,
        grad_flat: Tensor<F>,
        input_grad: bool,
    ) -> Option<Tensor<F>> {
        let mut g = grad_flat
            .reshape(cache.out_shape.to_vec())
            .expect("flattened gradient matches stack output");
        let mut result = None;
        for (k, (cc, rc, pc)) in cache.stages.into_iter().enumerate().rev() {
            let gp = self.pools[k].backward(pc, &g);
            let gr = relu_backward(rc, &gp);
            let gi = self.convs[k].backward(cc, &gr, k > 0 || input_grad);
            if k > 0 {
                g = gi.expect("input grad requested");
            } else {
                result = gi;
            }
        }
        result
    }

    pub(crate) fn params(&self) -> impl Iterator<Item = &LayerParams<F>> {
        self.convs.iter().map(|c| &c.params)
    }

    pub(crate) fn params_mut(&mut self) -> impl Iterator<Item = &mut LayerParams<F>> {
        self.convs.iter_mut().map(|c| &mut c.params)
    }
}

/// CNN mapping an example to its four transformation parameters.
///
/// The head is initialized with zero weights and bias `(1, 0, 1, 0)`, so a
/// fresh network emits the identity transform for every input.
#[derive(Clone, Debug, PartialEq)]
pub struct TransformNet<F> {
    config: TransformNetConfig,
    stack: ConvStack<F>,
    hidden: Dense<F>,
    head: Dense<F>,
}

#[derive(Debug)]
pub struct TransformNetCache<F> {
    stack: ConvStackCache<F>,
    hidden: DenseCache<F>,
    hidden_relu: ReluCache,
    head: DenseCache<F>,
    raw: Vec<[F; 4]>,
}

impl<F: Scalar> TransformNet<F> {
    pub fn new<R: Rng + ?Sized>(
        config: &TransformNetConfig,
        in_channels: usize,
        seq_len: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if config.blocks.is_empty() || config.hidden == 0 {
            return Err(Error::config("transformation network needs conv blocks and a hidden layer"));
        }
        if let Some(c) = &config.clamp {
            c.validate()?;
        }
        let (stack, flat) = ConvStack::new(&config.blocks, in_channels, seq_len, rng)?;
        let hidden = Dense::he_init(flat, config.hidden, rng);
        let mut head = Dense::zeros(config.hidden, 4);
        head.params
            .bias
            .data_mut()
            .copy_from_slice(&TransformParams::<F>::identity().to_array());
        Ok(Self {
            config: config.clone(),
            stack,
            hidden,
            head,
        })
    }

    pub fn config(&self) -> &TransformNetConfig {
        &self.config
    }

    /// Returns the clamped parameters per example; the cache holds the raw head output.
    pub fn forward(&self, x: &Tensor<F>) -> Result<(Vec<TransformParams<F>>, TransformNetCache<F>)> {
        let (flat, stack) = self.stack.forward(x)?;
        let (h, hidden) = self.hidden.forward(&flat)?;
        let (h, hidden_relu) = relu(&h);
        let (out, head) = self.head.forward(&h)?;
        let raw: Vec<[F; 4]> = out
            .data()
            .chunks_exact(4)
            .map(|c| [c[0], c[1], c[2], c[3]])
            .collect();
        let params = raw
            .iter()
            .map(|r| {
                let mut a = *r;
                if let Some(c) = &self.config.clamp {
                    a.iter_mut().for_each(|v| *v = c.apply(*v));
                }
                TransformParams::from_array(a)
            })
            .collect();
        Ok((
            params,
            TransformNetCache {
                stack,
                hidden,
                hidden_relu,
                head,
                raw,
            },
        ))
    }

    /// Backpropagates gradients w.r.t. the clamped parameters into the network weights.
    pub fn backward(&mut self, cache: TransformNetCache<F>, grad_params: &[[F; 4]]) {
        assert_eq!(grad_params.len(), cache.raw.len(), "one gradient per example");
        let mut g = Vec::with_capacity(cache.raw.len() * 4);
        for (raw, gp) in cache.raw.iter().zip(grad_params) {
            for k in 0..4 {
                let d = match &self.config.clamp {
                    Some(c) => c.derivative(raw[k]),
                    None => F::one(),
                };
                g.push(gp[k] * d);
            }
        }
        let g = Tensor::new(vec![grad_params.len(), 4], g).expect("head gradient shape");
        let g = self.head.backward(cache.head, &g, true).expect("input grad requested");
        let g = relu_backward(cache.hidden_relu, &g);
        let g = self.hidden.backward(cache.hidden, &g, true).expect("input grad requested");
        self.stack.backward(cache.stack, g, false);
    }

    pub fn layers(&self) -> Vec<&LayerParams<F>> {
        let mut v: Vec<&LayerParams<F>> = self.stack.params().collect();
        v.push(&self.hidden.params);
        v.push(&self.head.params);
        v
    }

    pub fn layers_mut(&mut self) -> Vec<&mut LayerParams<F>> {
        let mut v: Vec<&mut LayerParams<F>> = self.stack.params_mut().collect();
        v.push(&mut self.hidden.params);
        v.push(&mut self.head.params);
        v
    }
}

/// Which parameter pairs the transformer is allowed to use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformMode {
    TemporalOnly,
    MagnitudeOnly,
    Full,
}

impl TransformMode {
    pub fn uses_temporal(self) -> bool {
        matches!(self, Self::TemporalOnly | Self::Full)
    }

    pub fn uses_magnitude(self) -> bool {
        matches!(self, Self::MagnitudeOnly | Self::Full)
    }
}

/// Transformation network plus the two differentiable transforms it drives.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceTransformer<F> {
    pub net: TransformNet<F>,
    pub mode: TransformMode,
}

#[derive(Debug)]
pub struct SequenceTransformCache<F> {
    net: TransformNetCache<F>,
    input: Tensor<F>,
    grid: Option<SamplingGrid<F>>,
    resampled: Option<Tensor<F>>,
    params: Vec<TransformParams<F>>,
}

impl<F: Scalar> SequenceTransformCache<F> {
    /// Parameters actually applied, with frozen pairs set to identity.
    pub fn params(&self) -> &[TransformParams<F>] {
        &self.params
    }

    /// Head outputs before the clamp.
    pub fn raw_params(&self) -> &[[F; 4]] {
        &self.net.raw
    }
}

impl<F: Scalar> SequenceTransformer<F> {
    pub fn new<R: Rng + ?Sized>(
        config: &TransformNetConfig,
        mode: TransformMode,
        in_channels: usize,
        seq_len: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Self {
            net: TransformNet::new(config, in_channels, seq_len, rng)?,
            mode,
        })
    }

    /// Number of parameterized layers in the transformation network.
    pub fn layer_count(&self) -> usize {
        self.net.layers().len()
    }

    /// Predicts parameters for `x` and applies them; output length equals input length.
    pub fn forward(&self, x: &Tensor<F>) -> Result<(Tensor<F>, SequenceTransformCache<F>)> {
        let (_, _, t) = x.dims3()?;
        let (mut params, net) = self.net.forward(x)?;
        let identity = TransformParams::<F>::identity();
        for p in &mut params {
            if !self.mode.uses_temporal() {
                p.theta1 = identity.theta1;
                p.theta0 = identity.theta0;
            }
            if !self.mode.uses_magnitude() {
                p.phi1 = identity.phi1;
                p.phi0 = identity.phi0;
            }
        }
        let (grid, resampled) = if self.mode.uses_temporal() {
            let grid = make_grid(&params, t)?;
            let r = temporal_resample(x, &grid)?;
            (Some(grid), Some(r))
        } else {
            (None, None)
        };
        let out = if self.mode.uses_magnitude() {
            magnitude_transform(resampled.as_ref().unwrap_or(x), &params)?
        } else {
            resampled.clone().expect("temporal mode resamples")
        };
        Ok((
            out,
            SequenceTransformCache {
                net,
                input: x.clone(),
                grid,
                resampled,
                params,
            },
        ))
    }

    /// Accumulates transformation-network gradients from the gradient of the
    /// transformed output. Frozen parameter pairs receive zero gradient.
    pub fn backward(&mut self, cache: SequenceTransformCache<F>, grad_out: &Tensor<F>) -> Result<()> {
        let n = cache.params.len();
        let mut grads = vec![[F::zero(); 4]; n];
        let mut g = grad_out.clone();
        if self.mode.uses_magnitude() {
            let pre = cache.resampled.as_ref().unwrap_or(&cache.input);
            let (gx, gphi) = magnitude_transform_backward(pre, &cache.params, &g)?;
            for (acc, (g1, g0)) in grads.iter_mut().zip(gphi) {
                acc[2] = g1;
                acc[3] = g0;
            }
            g = gx;
        }
        if let Some(grid) = &cache.grid {
            let (_, gtheta) = temporal_resample_backward(&cache.input, grid, &g)?;
            for (acc, (g1, g0)) in grads.iter_mut().zip(gtheta) {
                acc[0] = g1;
                acc[1] = g0;
            }
        }
        self.net.backward(cache.net, &grads);
        Ok(())
    }
}

/// Applies fixed parameters to a batch: temporal resample (if used) then magnitude.
pub fn apply_transform<F: Scalar>(
    x: &Tensor<F>,
    params: &[TransformParams<F>],
    mode: TransformMode,
) -> Result<Tensor<F>> {
    let (_, _, t) = x.dims3()?;
    let mut out = x.clone();
    if mode.uses_temporal() {
        out = temporal_resample(&out, &make_grid(params, t)?)?;
    }
    if mode.uses_magnitude() {
        out = magnitude_transform(&out, params)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn signal(values: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(vec![1, 1, values.len()], values).unwrap()
    }

    fn theta(t1: f64, t0: f64) -> Vec<TransformParams<f64>> {
        vec![TransformParams::new(t1, t0, 1.0, 0.0)]
    }

    #[test]
    fn leaky_clamp_examples() {
        let c = LeakyClamp::default();
        assert_eq!(c.apply(0.5f64), 0.5);
        assert!((c.apply(3.0f64) - 2.01).abs() < 1e-15);
        assert!((c.apply(-2.5f64) + 2.005).abs() < 1e-15);
        assert_eq!(c.apply(2.0f64), 2.0);
        assert_eq!(c.derivative(1.0f64), 1.0);
        assert_eq!(c.derivative(-7.0f64), 0.01);
        assert!(LeakyClamp { bound: 2.0, slope: 1.5 }.validate().is_err());
    }

    #[test]
    fn grid_examples() {
        let g = make_grid(&theta(1.0, 0.0), 4).unwrap();
        let expect = [-1.0, -1.0 / 3.0, 1.0 / 3.0, 1.0];
        for (a, b) in g.source_coords(0).iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        let g = make_grid(&theta(0.5, 0.0), 4).unwrap();
        let expect = [-0.5, -1.0 / 6.0, 1.0 / 6.0, 0.5];
        for (a, b) in g.source_coords(0).iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        let g = make_grid(&theta(1.19, -0.03), 5).unwrap();
        for (s, t) in g.source_coords(0).iter().zip(g.target_coords()) {
            assert!((s - (1.19 * t - 0.03)).abs() < 1e-15);
        }
        assert!(make_grid(&theta(1.0, 0.0), 1).is_err());
    }

    #[test]
    fn resample_hand_fixtures() {
        let x = signal(&[0., 3., 6., 9.]);
        let out = temporal_resample(&x, &make_grid(&theta(1.0, 0.0), 4).unwrap()).unwrap();
        assert_eq!(out, x);

        let out = temporal_resample(&x, &make_grid(&theta(0.5, 0.0), 4).unwrap()).unwrap();
        assert_eq!(out.data(), &[2.25, 3.75, 5.25, 6.75]);

        let out = temporal_resample(&x, &make_grid(&theta(1.0, 0.5), 4).unwrap()).unwrap();
        assert_eq!(out.data(), &[2.25, 5.25, 8.25, 9.0]);
    }

    #[test]
    fn resample_pads_with_boundary_values() {
        let x = signal(&[4., -1., 2., 7., 5.]);
        let out = temporal_resample(&x, &make_grid(&theta(0.1, 3.0), 5).unwrap()).unwrap();
        assert!(out.data().iter().all(|&v| v == 5.0));
        let out = temporal_resample(&x, &make_grid(&theta(0.1, -3.0), 5).unwrap()).unwrap();
        assert!(out.data().iter().all(|&v| v == 4.0));
    }

    #[test]
    fn resample_flip() {
        let x = signal(&[1., 2., 3., 4., 5.]);
        let out = temporal_resample(&x, &make_grid(&theta(-1.0, 0.0), 5).unwrap()).unwrap();
        assert_eq!(out.data(), &[5., 4., 3., 2., 1.]);
    }

    #[test]
    fn resample_backward_zero_slope_in_padding() {
        let x = signal(&[0., 3., 6., 9.]);
        let grid = make_grid(&theta(1.0, 0.5), 4).unwrap();
        let g = Tensor::full(&[1, 1, 4], 1.0);
        let (gx, gt) = temporal_resample_backward(&x, &grid, &g).unwrap();
        // indices 0.75, 1.75, 2.75 have slope 3; 3.75 is in the padded region
        let c = 1.5;
        let target = grid.target_coords();
        assert!((gt[0].1 - 3.0 * 3.0 * c).abs() < 1e-12);
        let expect1 = 3.0 * c * (target[0] + target[1] + target[2]);
        assert!((gt[0].0 - expect1).abs() < 1e-12);
        assert!((gx.data().iter().sum::<f64>() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn magnitude_examples() {
        let x = signal(&[0., 1., 2.]);
        let id = magnitude_transform(&x, &[TransformParams::identity()]).unwrap();
        assert_eq!(id, x);
        let y = magnitude_transform(&x, &[TransformParams::new(1.0, 0.0, 2.0, 1.0)]).unwrap();
        assert_eq!(y.data(), &[1., 3., 5.]);
        let y = magnitude_transform(&signal(&[1.0]), &[TransformParams::new(1.0, 0.0, 0.78, -0.04)]).unwrap();
        assert!((y.data()[0] - 0.74).abs() < 1e-15);
    }

    #[test]
    fn fresh_network_emits_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = TransformNet::<f64>::new(&TransformNetConfig::default(), 3, 20, &mut rng).unwrap();
        let x = Tensor::from_f64(
            vec![2, 3, 20],
            &(0..120).map(|k| (k as f64 * 0.37).sin() * 3.0).collect::<Vec<_>>(),
        )
        .unwrap();
        let (params, _) = net.forward(&x).unwrap();
        for p in params {
            assert_eq!(p, TransformParams::identity());
        }
    }

    #[test]
    fn too_short_sequence_is_config_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = TransformNetConfig {
            blocks: vec![ConvBlockConfig {
                channels: 4,
                kernel: 5,
                stride: 1,
                pad: 0,
                pool_window: 2,
                pool_stride: 2,
            }],
            ..Default::default()
        };
        let err = TransformNet::<f64>::new(&cfg, 1, 5, &mut rng).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn identity_transformer_is_exact_in_every_mode() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = Tensor::<f64>::from_f64(
            vec![2, 2, 48],
            &(0..192).map(|k| ((k * 7919) % 101) as f64 / 13.0 - 3.3).collect::<Vec<_>>(),
        )
        .unwrap();
        for mode in [TransformMode::TemporalOnly, TransformMode::MagnitudeOnly, TransformMode::Full] {
            let st = SequenceTransformer::new(&TransformNetConfig::default(), mode, 2, 48, &mut rng).unwrap();
            let (y, _) = st.forward(&x).unwrap();
            assert_eq!(y, x, "{mode:?}");
        }
    }
}
