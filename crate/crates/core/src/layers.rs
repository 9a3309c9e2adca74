//! Differentiable layers with hand-written backward passes.
//!
//! Each forward call returns the layer output plus a cache; the matching
//! backward call consumes that cache by value, so a cache can be used once.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{LayerParams, Tensor};

/// Lower/upper clamp applied to probabilities before taking logs.
pub const PROB_EPS: f64 = 1e-7;

fn he_normal<F: Scalar, R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor<F> {
    let std = (2.0 / fan_in as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("finite std");
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        *v = F::lit(normal.sample(rng));
    }
    t
}

/// Output length of a sliding window: `floor((len + 2*pad - window) / stride) + 1`.
pub fn window_out_len(len: usize, window: usize, stride: usize, pad: usize) -> Result<usize> {
    if window == 0 || stride == 0 {
        return Err(Error::config("window and stride must be positive"));
    }
    let padded = len + 2 * pad;
    if padded < window {
        return Err(Error::config(format!(
            "sequence of length {len} (padding {pad}) is shorter than window {window}"
        )));
    }
    Ok((padded - window) / stride + 1)
}

// ---------------------------------------------------------------------------
// conv1d
// ---------------------------------------------------------------------------

/// 1D convolution (cross-correlation) with zero padding on both ends.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv1d<F> {
    pub params: LayerParams<F>,
    pub stride: usize,
    pub pad: usize,
}

#[derive(Debug)]
pub struct Conv1dCache<F> {
    padded: Vec<F>,
    n: usize,
    c_in: usize,
    t_in: usize,
    t_out: usize,
}

impl<F: Scalar> Conv1d<F> {
    /// `params.weights` is `[c_out, c_in, k]`, `params.bias` is `[c_out]`.
    pub fn new(params: LayerParams<F>, stride: usize, pad: usize) -> Result<Self> {
        let (c_out, _, _) = params.weights.dims3()?;
        if params.bias.shape() != [c_out] {
            return Err(Error::config(format!(
                "conv bias shape {:?} does not match {c_out} output channels",
                params.bias.shape()
            )));
        }
        if stride == 0 {
            return Err(Error::config("conv stride must be positive"));
        }
        Ok(Self { params, stride, pad })
    }

    pub fn he_init<R: Rng + ?Sized>(
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        rng: &mut R,
    ) -> Self {
        let weights = he_normal(&[c_out, c_in, kernel], c_in * kernel, rng);
        Self {
            params: LayerParams::new(weights, Tensor::zeros(&[c_out])),
            stride,
            pad,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.params.weights.shape()[0]
    }

    pub fn kernel(&self) -> usize {
        self.params.weights.shape()[2]
    }

    pub fn out_len(&self, t: usize) -> Result<usize> {
        window_out_len(t, self.kernel(), self.stride, self.pad)
    }

    pub fn forward(&self, x: &Tensor<F>) -> Result<(Tensor<F>, Conv1dCache<F>)> {
        let (n, c_in, t_in) = x.dims3()?;
        let (c_out, w_in, k) = self.params.weights.dims3()?;
        if c_in != w_in {
            return Err(Error::config(format!(
                "conv expects {w_in} input channels, got {c_in}"
            )));
        }
        let t_out = self.out_len(t_in)?;
        let tp = t_in + 2 * self.pad;
        let mut padded = vec![F::zero(); n * c_in * tp];
        for (row, src) in padded.chunks_exact_mut(tp).zip(x.data().chunks_exact(t_in)) {
            row[self.pad..self.pad + t_in].copy_from_slice(src);
        }

        let w = self.params.weights.data();
        let bias = self.params.bias.data();
        let s = self.stride;
        let mut out = vec![F::zero(); n * c_out * t_out];
        for b in 0..n {
            for o in 0..c_out {
                let row = &mut out[(b * c_out + o) * t_out..][..t_out];
                row.iter_mut().for_each(|v| *v = bias[o]);
                for i in 0..c_in {
                    let xrow = &padded[(b * c_in + i) * tp..][..tp];
                    for m in 0..k {
                        let wv = w[(o * c_in + i) * k + m];
                        if s == 1 {
                            for (r, &xv) in row.iter_mut().zip(&xrow[m..m + t_out]) {
                                *r += wv * xv;
                            }
                        } else {
                            for (j, r) in row.iter_mut().enumerate() {
                                *r += wv * xrow[j * s + m];
                            }
                        }
                    }
                }
            }
        }
        let cache = Conv1dCache {
            padded,
            n,
            c_in,
            t_in,
            t_out,
        };
        Ok((Tensor::new(vec![n, c_out, t_out], out)?, cache))
    }

    /// Accumulates weight and bias gradients; returns the input gradient when
    /// `input_grad` is set.
    pub fn backward(
        &mut self,
        cache: Conv1dCache<F>,
        grad_out: &Tensor<F>,
        input_grad: bool,
    ) -> Option<Tensor<F>> {
        let Conv1dCache {
            padded,
            n,
            c_in,
            t_in,
            t_out,
        } = cache;
        let (c_out, _, k) = self.params.weights.dims3().expect("conv weights are rank 3");
        assert_eq!(grad_out.shape(), [n, c_out, t_out], "conv grad shape");
        let tp = t_in + 2 * self.pad;
        let s = self.stride;
        let g = grad_out.data();

        {
            let gw = self.params.grad_weights.data_mut();
            for b in 0..n {
                for o in 0..c_out {
                    let grow = &g[(b * c_out + o) * t_out..][..t_out];
                    for i in 0..c_in {
                        let xrow = &padded[(b * c_in + i) * tp..][..tp];
                        for m in 0..k {
                            let acc: F = if s == 1 {
                                grow.iter().zip(&xrow[m..m + t_out]).map(|(&a, &b)| a * b).sum()
                            } else {
                                grow.iter()
                                    .enumerate()
                                    .map(|(j, &a)| a * xrow[j * s + m])
                                    .sum()
                            };
                            gw[(o * c_in + i) * k + m] += acc;
                        }
                    }
                }
            }
        }
        {
            let gb = self.params.grad_bias.data_mut();
            for b in 0..n {
                for (o, gbo) in gb.iter_mut().enumerate() {
                    *gbo += g[(b * c_out + o) * t_out..][..t_out].iter().copied().sum::<F>();
                }
            }
        }
        if !input_grad {
            return None;
        }

        let w = self.params.weights.data();
        let mut gpad = vec![F::zero(); n * c_in * tp];
        for b in 0..n {
            for o in 0..c_out {
                let grow = &g[(b * c_out + o) * t_out..][..t_out];
                for i in 0..c_in {
                    let xrow = &mut gpad[(b * c_in + i) * tp..][..tp];
                    for m in 0..k {
                        let wv = w[(o * c_in + i) * k + m];
                        if s == 1 {
                            for (xr, &gv) in xrow[m..m + t_out].iter_mut().zip(grow) {
                                *xr += wv * gv;
                            }
                        } else {
                            for (j, &gv) in grow.iter().enumerate() {
                                xrow[j * s + m] += wv * gv;
                            }
                        }
                    }
                }
            }
        }
        let mut gx = Vec::with_capacity(n * c_in * t_in);
        for row in gpad.chunks_exact(tp) {
            gx.extend_from_slice(&row[self.pad..self.pad + t_in]);
        }
        Some(Tensor::new(vec![n, c_in, t_in], gx).expect("input grad shape"))
    }
}

/// Stateless convolution forward pass.
pub fn conv1d<F: Scalar>(
    input: &Tensor<F>,
    params: &LayerParams<F>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<F>> {
    let layer = Conv1d::new(params.clone(), stride, pad)?;
    Ok(layer.forward(input)?.0)
}

// ---------------------------------------------------------------------------
// maxpool1d
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MaxPool1d {
    pub window: usize,
    pub stride: usize,
}

#[derive(Debug)]
pub struct MaxPoolCache {
    argmax: Vec<usize>,
    in_shape: [usize; 3],
}

impl MaxPool1d {
    pub fn new(window: usize, stride: usize) -> Result<Self> {
        if window == 0 || stride == 0 {
            return Err(Error::config("pool window and stride must be positive"));
        }
        Ok(Self { window, stride })
    }

    pub fn out_len(&self, t: usize) -> Result<usize> {
        window_out_len(t, self.window, self.stride, 0)
    }

    /// Ties resolve to the lowest index in the window.
    pub fn forward<F: Scalar>(&self, x: &Tensor<F>) -> Result<(Tensor<F>, MaxPoolCache)> {
        let (n, c, t) = x.dims3()?;
        let t_out = self.out_len(t)?;
        let mut out = Vec::with_capacity(n * c * t_out);
        let mut argmax = Vec::with_capacity(n * c * t_out);
        for (r, row) in x.data().chunks_exact(t).enumerate() {
            for j in 0..t_out {
                let start = j * self.stride;
                let mut best = start;
                for idx in start + 1..start + self.window {
                    if row[idx] > row[best] {
                        best = idx;
                    }
                }
                out.push(row[best]);
                argmax.push(r * t + best);
            }
        }
        let cache = MaxPoolCache {
            argmax,
            in_shape: [n, c, t],
        };
        Ok((Tensor::new(vec![n, c, t_out], out)?, cache))
    }

    pub fn backward<F: Scalar>(&self, cache: MaxPoolCache, grad_out: &Tensor<F>) -> Tensor<F> {
        assert_eq!(grad_out.len(), cache.argmax.len(), "pool grad shape");
        let mut gx = Tensor::zeros(&cache.in_shape);
        let data = gx.data_mut();
        for (&idx, &g) in cache.argmax.iter().zip(grad_out.data()) {
            data[idx] += g;
        }
        gx
    }
}

pub fn maxpool1d<F: Scalar>(input: &Tensor<F>, window: usize, stride: usize) -> Result<Tensor<F>> {
    Ok(MaxPool1d::new(window, stride)?.forward(input)?.0)
}

// ---------------------------------------------------------------------------
// dense
// ---------------------------------------------------------------------------

/// Fully connected layer, `output = input · weights + bias` with weights `[f, h]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<F> {
    pub params: LayerParams<F>,
}

#[derive(Debug)]
pub struct DenseCache<F> {
    input: Tensor<F>,
}

impl<F: Scalar> Dense<F> {
    pub fn new(params: LayerParams<F>) -> Result<Self> {
        let (_, h) = params.weights.dims2()?;
        if params.bias.shape() != [h] {
            return Err(Error::config(format!(
                "dense bias shape {:?} does not match width {h}",
                params.bias.shape()
            )));
        }
        Ok(Self { params })
    }

    pub fn he_init<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let weights = he_normal(&[inputs, outputs], inputs, rng);
        Self {
            params: LayerParams::new(weights, Tensor::zeros(&[outputs])),
        }
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            params: LayerParams::new(Tensor::zeros(&[inputs, outputs]), Tensor::zeros(&[outputs])),
        }
    }

    pub fn inputs(&self) -> usize {
        self.params.weights.shape()[0]
    }

    pub fn outputs(&self) -> usize {
        self.params.weights.shape()[1]
    }

    pub fn forward(&self, x: &Tensor<F>) -> Result<(Tensor<F>, DenseCache<F>)> {
        let (n, f) = x.dims2()?;
        let (wf, h) = self.params.weights.dims2()?;
        if f != wf {
            return Err(Error::config(format!(
                "dense layer expects {wf} features, got {f}"
            )));
        }
        let w = self.params.weights.data();
        let bias = self.params.bias.data();
        let mut out = vec![F::zero(); n * h];
        for (orow, xrow) in out.chunks_exact_mut(h).zip(x.data().chunks_exact(f)) {
            orow.copy_from_slice(bias);
            for (&xv, wrow) in xrow.iter().zip(w.chunks_exact(h)) {
                if xv == F::zero() {
                    continue;
                }
                for (o, &wv) in orow.iter_mut().zip(wrow) {
                    *o += xv * wv;
                }
            }
        }
        Ok((Tensor::new(vec![n, h], out)?, DenseCache { input: x.clone() }))
    }

    pub fn backward(
        &mut self,
        cache: DenseCache<F>,
        grad_out: &Tensor<F>,
        input_grad: bool,
    ) -> Option<Tensor<F>> {
        let x = cache.input;
        let (n, f) = x.dims2().expect("dense cache is rank 2");
        let h = self.outputs();
        assert_eq!(grad_out.shape(), [n, h], "dense grad shape");
        let g = grad_out.data();
        {
            let gw = self.params.grad_weights.data_mut();
            for (xrow, grow) in x.data().chunks_exact(f).zip(g.chunks_exact(h)) {
                for (&xv, gwrow) in xrow.iter().zip(gw.chunks_exact_mut(h)) {
                    if xv == F::zero() {
                        continue;
                    }
                    for (a, &gv) in gwrow.iter_mut().zip(grow) {
                        *a += xv * gv;
                    }
                }
            }
        }
        {
            let gb = self.params.grad_bias.data_mut();
            for grow in g.chunks_exact(h) {
                for (a, &gv) in gb.iter_mut().zip(grow) {
                    *a += gv;
                }
            }
        }
        if !input_grad {
            return None;
        }
        let w = self.params.weights.data();
        let mut gx = vec![F::zero(); n * f];
        for (gxrow, grow) in gx.chunks_exact_mut(f).zip(g.chunks_exact(h)) {
            for (gxv, wrow) in gxrow.iter_mut().zip(w.chunks_exact(h)) {
                *gxv = wrow.iter().zip(grow).map(|(&a, &b)| a * b).sum();
            }
        }
        Some(Tensor::new(vec![n, f], gx).expect("dense input grad shape"))
    }
}

pub fn dense<F: Scalar>(input: &Tensor<F>, params: &LayerParams<F>) -> Result<Tensor<F>> {
    Ok(Dense::new(params.clone())?.forward(input)?.0)
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

#[derive(Debug)]
pub struct ReluCache {
    active: Vec<bool>,
}

pub fn relu<F: Scalar>(x: &Tensor<F>) -> (Tensor<F>, ReluCache) {
    let active: Vec<bool> = x.data().iter().map(|&v| v > F::zero()).collect();
    (x.map(|v| if v > F::zero() { v } else { F::zero() }), ReluCache { active })
}

/// Subgradient 0 at exactly 0.
pub fn relu_backward<F: Scalar>(cache: ReluCache, grad_out: &Tensor<F>) -> Tensor<F> {
    let mut g = grad_out.clone();
    for (v, &on) in g.data_mut().iter_mut().zip(&cache.active) {
        if !on {
            *v = F::zero();
        }
    }
    g
}

#[derive(Debug)]
pub struct DropoutCache<F> {
    /// `None` when the layer acted as the identity.
    scale: Option<Vec<F>>,
}

/// Inverted dropout: survivors are scaled by `1 / (1 - rate)` during training,
/// evaluation mode and `rate == 0` are the identity.
pub fn dropout<F: Scalar, R: Rng + ?Sized>(
    x: &Tensor<F>,
    rate: f64,
    training: bool,
    rng: &mut R,
) -> Result<(Tensor<F>, DropoutCache<F>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::config(format!("dropout rate {rate} outside [0, 1)")));
    }
    if !training || rate == 0.0 {
        return Ok((x.clone(), DropoutCache { scale: None }));
    }
    let keep = F::lit(1.0 / (1.0 - rate));
    let scale: Vec<F> = (0..x.len())
        .map(|_| if rng.random::<f64>() < rate { F::zero() } else { keep })
        .collect();
    let mut out = x.clone();
    for (v, &s) in out.data_mut().iter_mut().zip(&scale) {
        *v *= s;
    }
    Ok((out, DropoutCache { scale: Some(scale) }))
}

pub fn dropout_backward<F: Scalar>(cache: DropoutCache<F>, grad_out: &Tensor<F>) -> Tensor<F> {
    let mut g = grad_out.clone();
    if let Some(scale) = cache.scale {
        for (v, s) in g.data_mut().iter_mut().zip(scale) {
            *v *= s;
        }
    }
    g
}

/// Numerically stable logistic function.
#[inline]
pub fn sigmoid_scalar<F: Scalar>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

#[derive(Debug)]
pub struct SigmoidCache<F> {
    output: Tensor<F>,
}

pub fn sigmoid<F: Scalar>(x: &Tensor<F>) -> (Tensor<F>, SigmoidCache<F>) {
    let y = x.map(sigmoid_scalar);
    (y.clone(), SigmoidCache { output: y })
}

pub fn sigmoid_backward<F: Scalar>(cache: SigmoidCache<F>, grad_out: &Tensor<F>) -> Tensor<F> {
    let mut g = grad_out.clone();
    for (v, &y) in g.data_mut().iter_mut().zip(cache.output.data()) {
        *v *= y * (F::one() - y);
    }
    g
}

/// Mean binary cross-entropy and its gradient w.r.t. each probability.
///
/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` inside the logs.
/// The gradient is `(p - y) / (p_c (1 - p_c)) / n` with `p_c` the clamped
/// probability: exact inside the clamp window, and still pointing the right
/// way for saturated predictions.
pub fn bce_loss<F: Scalar>(probs: &[F], labels: &[u8]) -> Result<(F, Vec<F>)> {
    if probs.len() != labels.len() {
        return Err(Error::config(format!(
            "{} probabilities for {} labels",
            probs.len(),
            labels.len()
        )));
    }
    if probs.is_empty() {
        return Err(Error::data("empty batch"));
    }
    if let Some(bad) = labels.iter().find(|&&y| y > 1) {
        return Err(Error::data(format!("label {bad} is not 0 or 1")));
    }
    let eps = F::lit(PROB_EPS);
    let n = F::lit(probs.len() as f64);
    let mut loss = F::zero();
    let mut grad = Vec::with_capacity(probs.len());
    for (&p, &y) in probs.iter().zip(labels) {
        let pc = p.max(eps).min(F::one() - eps);
        let y = if y == 1 { F::one() } else { F::zero() };
        loss -= y * pc.ln() + (F::one() - y) * (F::one() - pc).ln();
        grad.push((p - y) / (pc * (F::one() - pc)) / n);
    }
    Ok((loss / n, grad))
}
