use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::LayerParams;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate >= 0.0
            && self.learning_rate.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("invalid Adam settings {self:?}")))
        }
    }
}

#[derive(Clone, Debug)]
struct Moments<F> {
    m_w: Vec<F>,
    v_w: Vec<F>,
    m_b: Vec<F>,
    v_b: Vec<F>,
}

/// Adam with bias-corrected moment estimates, one moment pair per parameter.
#[derive(Clone, Debug)]
pub struct Adam<F> {
    config: AdamConfig,
    step: u64,
    moments: Vec<Moments<F>>,
}

impl<F: Scalar> Adam<F> {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            moments: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update from the accumulated gradients. `layers` must be
    /// passed in the same order on every call.
    pub fn step(&mut self, layers: Vec<&mut LayerParams<F>>) {
        let scales = vec![1.0; layers.len()];
        self.step_scaled(layers, &scales);
    }

    /// Like [`Adam::step`] with a learning-rate multiplier per layer.
    pub fn step_scaled(&mut self, layers: Vec<&mut LayerParams<F>>, lr_scales: &[f64]) {
        assert_eq!(layers.len(), lr_scales.len(), "one learning-rate scale per layer");
        if self.moments.is_empty() {
            self.moments = layers
                .iter()
                .map(|p| Moments {
                    m_w: vec![F::zero(); p.weights.len()],
                    v_w: vec![F::zero(); p.weights.len()],
                    m_b: vec![F::zero(); p.bias.len()],
                    v_b: vec![F::zero(); p.bias.len()],
                })
                .collect();
        }
        assert_eq!(layers.len(), self.moments.len(), "layer list changed between steps");
        self.step += 1;
        let c = &self.config;
        let b1 = F::lit(c.beta1);
        let b2 = F::lit(c.beta2);
        let t = self.step as i32;
        let bc1 = F::one() - F::lit(c.beta1.powi(t));
        let bc2 = F::one() - F::lit(c.beta2.powi(t));
        let eps = F::lit(c.epsilon);
        let update = |w: &mut [F], g: &[F], m: &mut [F], v: &mut [F], lr: F| {
            for (((w, &g), m), v) in w.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = b1 * *m + (F::one() - b1) * g;
                *v = b2 * *v + (F::one() - b2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        };
        for ((p, mo), &scale) in layers.into_iter().zip(&mut self.moments).zip(lr_scales) {
            let lr = F::lit(c.learning_rate * scale);
            assert_eq!(p.weights.len(), mo.m_w.len(), "parameter shape changed");
            let LayerParams {
                weights,
                bias,
                grad_weights,
                grad_bias,
            } = p;
            update(weights.data_mut(), grad_weights.data(), &mut mo.m_w, &mut mo.v_w, lr);
            update(bias.data_mut(), grad_bias.data(), &mut mo.m_b, &mut mo.v_b, lr);
        }
    }
}
