//! The 1D CNN classifier and the four model variants built around it.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{
    dropout, dropout_backward, relu, relu_backward, sigmoid, sigmoid_backward, Dense, DenseCache,
    DropoutCache, ReluCache, SigmoidCache,
};
use crate::scalar::Scalar;
use crate::tensor::{LayerParams, Tensor};
use crate::transformer::{
    ConvBlockConfig, ConvStack, ConvStackCache, SequenceTransformCache, SequenceTransformer,
    TransformMode, TransformNetConfig, TransformParams,
};

/// Dropout used when the config leaves it unset.
pub const BASELINE_DROPOUT: f64 = 0.3;
pub const TRANSFORMER_DROPOUT: f64 = 0.2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierConfig {
    /// Number of `conv -> ReLU -> maxpool` blocks.
    pub depth: usize,
    pub channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub pool_window: usize,
    pub pool_stride: usize,
    pub hidden: usize,
    /// `None` picks the variant default (0.3 baseline, 0.2 with a transformer).
    pub dropout: Option<f64>,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            depth: 2,
            channels: 64,
            kernel: 3,
            stride: 1,
            pad: 1,
            pool_window: 2,
            pool_stride: 2,
            hidden: 100,
            dropout: None,
        }
    }
}

impl ClassifierConfig {
    pub fn blocks(&self) -> Vec<ConvBlockConfig> {
        vec![
            ConvBlockConfig {
                channels: self.channels,
                kernel: self.kernel,
                stride: self.stride,
                pad: self.pad,
                pool_window: self.pool_window,
                pool_stride: self.pool_stride,
            };
            self.depth
        ]
    }

    pub fn dropout_for(&self, variant: ModelVariant) -> f64 {
        self.dropout.unwrap_or(match variant {
            ModelVariant::Baseline => BASELINE_DROPOUT,
            _ => TRANSFORMER_DROPOUT,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.hidden == 0 {
            return Err(Error::config("classifier depth and hidden width must be positive"));
        }
        if let Some(r) = self.dropout {
            if !(0.0..1.0).contains(&r) {
                return Err(Error::config(format!("dropout rate {r} outside [0, 1)")));
            }
        }
        Ok(())
    }
}

/// Ablation variants: no transformer, temporal only, magnitude only, both.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelVariant {
    Baseline,
    TemporalOnly,
    MagnitudeOnly,
    Full,
}

impl ModelVariant {
    pub const ALL: [ModelVariant; 4] = [
        ModelVariant::Baseline,
        ModelVariant::Full,
        ModelVariant::TemporalOnly,
        ModelVariant::MagnitudeOnly,
    ];

    pub fn mode(self) -> Option<TransformMode> {
        match self {
            Self::Baseline => None,
            Self::TemporalOnly => Some(TransformMode::TemporalOnly),
            Self::MagnitudeOnly => Some(TransformMode::MagnitudeOnly),
            Self::Full => Some(TransformMode::Full),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Baseline => "baseline",
            Self::TemporalOnly => "temporal_only",
            Self::MagnitudeOnly => "magnitude_only",
            Self::Full => "full",
        }
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Self::Baseline),
            "temporal_only" | "temporal" => Ok(Self::TemporalOnly),
            "magnitude_only" | "magnitude" => Ok(Self::MagnitudeOnly),
            "full" => Ok(Self::Full),
            other => Err(Error::config(format!(
                "unknown variant {other:?} (expected baseline, temporal_only, magnitude_only or full)"
            ))),
        }
    }
}

// ---------------------------------------------------------------------------
// classifier
// ---------------------------------------------------------------------------

/// `depth x (conv -> ReLU -> maxpool)`, channel-major flatten, hidden dense
/// with ReLU and dropout, then a single sigmoid unit.
#[derive(Clone, Debug, PartialEq)]
pub struct Classifier<F> {
    config: ClassifierConfig,
    stack: ConvStack<F>,
    hidden: Dense<F>,
    output: Dense<F>,
    dropout: f64,
}

#[derive(Debug)]
pub struct ClassifierCache<F> {
    stack: ConvStackCache<F>,
    hidden: DenseCache<F>,
    hidden_relu: ReluCache,
    dropout: DropoutCache<F>,
    output: DenseCache<F>,
    sigmoid: SigmoidCache<F>,
}

impl<F: Scalar> Classifier<F> {
    pub fn new<R: Rng + ?Sized>(
        config: &ClassifierConfig,
        dropout: f64,
        in_channels: usize,
        seq_len: usize,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::config(format!("dropout rate {dropout} outside [0, 1)")));
        }
        let (stack, flat) = ConvStack::new(&config.blocks(), in_channels, seq_len, rng)?;
        let hidden = Dense::he_init(flat, config.hidden, rng);
        let output = Dense::he_init(config.hidden, 1, rng);
        Ok(Self {
            config: config.clone(),
            stack,
            hidden,
            output,
            dropout,
        })
    }

    pub fn config(&self) -> &ClassifierConfig {
        &self.config
    }

    pub fn dropout_rate(&self) -> f64 {
        self.dropout
    }

    pub fn output_layer_mut(&mut self) -> &mut LayerParams<F> {
        &mut self.output.params
    }

    pub fn forward<R: Rng + ?Sized>(
        &self,
        x: &Tensor<F>,
        training: bool,
        rng: &mut R,
    ) -> Result<(Vec<F>, ClassifierCache<F>)> {
        let (flat, stack) = self.stack.forward(x)?;
        let (h, hidden) = self.hidden.forward(&flat)?;
        let (h, hidden_relu) = relu(&h);
        let (h, dropout_cache) = dropout(&h, self.dropout, training, rng)?;
        let (logits, output) = self.output.forward(&h)?;
        let (p, sigmoid_cache) = sigmoid(&logits);
        Ok((
            p.into_data(),
            ClassifierCache {
                stack,
                hidden,
                hidden_relu,
                dropout: dropout_cache,
                output,
                sigmoid: sigmoid_cache,
            },
        ))
    }

    pub fn backward(
        &mut self,
        cache: ClassifierCache<F>,
        grad_probs: &[F],
        input_grad: bool,
    ) -> Option<Tensor<F>> {
        let g = Tensor::new(vec![grad_probs.len(), 1], grad_probs.to_vec())
            .expect("one gradient per example");
        let g = sigmoid_backward(cache.sigmoid, &g);
        let g = self.output.backward(cache.output, &g, true).expect("input grad requested");
        let g = dropout_backward(cache.dropout, &g);
        let g = relu_backward(cache.hidden_relu, &g);
        let g = self.hidden.backward(cache.hidden, &g, true).expect("input grad requested");
        self.stack.backward(cache.stack, g, input_grad)
    }

    pub fn named_layers(&self) -> Vec<(String, &LayerParams<F>)> {
        let mut v: Vec<(String, &LayerParams<F>)> = self
            .stack
            .params()
            .enumerate()
            .map(|(k, p)| (format!("classifier.conv{k}"), p))
            .collect();
        v.push(("classifier.hidden".into(), &self.hidden.params));
        v.push(("classifier.output".into(), &self.output.params));
        v
    }

    pub fn layers_mut(&mut self) -> Vec<&mut LayerParams<F>> {
        let mut v: Vec<&mut LayerParams<F>> = self.stack.params_mut().collect();
        v.push(&mut self.hidden.params);
        v.push(&mut self.output.params);
        v
    }

    pub fn num_params(&self) -> usize {
        self.named_layers().iter().map(|(_, p)| p.num_params()).sum()
    }
}

// ---------------------------------------------------------------------------
// model
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub classifier: ClassifierConfig,
    pub transformer: TransformNetConfig,
}

/// A classifier, optionally preceded by a sequence transformer.
#[derive(Clone, Debug, PartialEq)]
pub struct Model<F> {
    variant: ModelVariant,
    config: ModelConfig,
    in_channels: usize,
    seq_len: usize,
    transformer: Option<SequenceTransformer<F>>,
    classifier: Classifier<F>,
}

#[derive(Debug)]
pub struct ModelCache<F> {
    transform: Option<SequenceTransformCache<F>>,
    classifier: ClassifierCache<F>,
}

impl<F: Scalar> ModelCache<F> {
    /// Applied transformation parameters, `None` for the baseline.
    pub fn transform_params(&self) -> Option<&[TransformParams<F>]> {
        self.transform.as_ref().map(|c| c.params())
    }

    /// Transformation-network head outputs before clamping.
    pub fn raw_transform_params(&self) -> Option<&[[F; 4]]> {
        self.transform.as_ref().map(|c| c.raw_params())
    }
}

impl<F: Scalar> Model<F> {
    /// Initializes weights from `seed`. The classifier draws from its own
    /// stream, so every variant built with the same seed shares classifier
    /// weights.
    pub fn new(
        variant: ModelVariant,
        config: &ModelConfig,
        in_channels: usize,
        seq_len: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut clf_rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tn_rng = ChaCha8Rng::seed_from_u64(seed);
        tn_rng.set_stream(1);
        let classifier = Classifier::new(
            &config.classifier,
            config.classifier.dropout_for(variant),
            in_channels,
            seq_len,
            &mut clf_rng,
        )?;
        let transformer = match variant.mode() {
            Some(mode) => Some(SequenceTransformer::new(
                &config.transformer,
                mode,
                in_channels,
                seq_len,
                &mut tn_rng,
            )?),
            None => None,
        };
        Ok(Self {
            variant,
            config: config.clone(),
            in_channels,
            seq_len,
            transformer,
            classifier,
        })
    }

    pub fn variant(&self) -> ModelVariant {
        self.variant
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn input_shape(&self) -> (usize, usize) {
        (self.in_channels, self.seq_len)
    }

    pub fn classifier(&self) -> &Classifier<F> {
        &self.classifier
    }

    pub fn classifier_mut(&mut self) -> &mut Classifier<F> {
        &mut self.classifier
    }

    pub fn transformer(&self) -> Option<&SequenceTransformer<F>> {
        self.transformer.as_ref()
    }

    pub fn transformer_mut(&mut self) -> Option<&mut SequenceTransformer<F>> {
        self.transformer.as_mut()
    }

    fn check_input(&self, x: &Tensor<F>) -> Result<()> {
        let (_, c, t) = x.dims3()?;
        if (c, t) != (self.in_channels, self.seq_len) {
            return Err(Error::config(format!(
                "model expects [n, {}, {}] input, got {:?}",
                self.in_channels,
                self.seq_len,
                x.shape()
            )));
        }
        Ok(())
    }

    pub fn forward<R: Rng + ?Sized>(
        &self,
        x: &Tensor<F>,
        training: bool,
        rng: &mut R,
    ) -> Result<(Vec<F>, ModelCache<F>)> {
        self.check_input(x)?;
        let (probs, transform, classifier) = match &self.transformer {
            Some(st) => {
                let (xt, tc) = st.forward(x)?;
                let (p, cc) = self.classifier.forward(&xt, training, rng)?;
                (p, Some(tc), cc)
            }
            None => {
                let (p, cc) = self.classifier.forward(x, training, rng)?;
                (p, None, cc)
            }
        };
        Ok((probs, ModelCache { transform, classifier }))
    }

    /// Accumulates gradients of every parameter given d(loss)/d(probability).
    pub fn backward(&mut self, cache: ModelCache<F>, grad_probs: &[F]) -> Result<()> {
        let need_input = cache.transform.is_some();
        let gx = self.classifier.backward(cache.classifier, grad_probs, need_input);
        if let (Some(st), Some(tc)) = (self.transformer.as_mut(), cache.transform) {
            st.backward(tc, &gx.expect("input grad requested"))?;
        }
        Ok(())
    }

    /// Evaluation-mode probabilities.
    pub fn predict(&self, x: &Tensor<F>) -> Result<Vec<F>> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        Ok(self.forward(x, false, &mut rng)?.0)
    }

    /// Transformed inputs and the parameters applied to them; `None` for the baseline.
    pub fn transform(&self, x: &Tensor<F>) -> Result<Option<(Tensor<F>, Vec<TransformParams<F>>)>> {
        self.check_input(x)?;
        match &self.transformer {
            Some(st) => {
                let (y, cache) = st.forward(x)?;
                Ok(Some((y, cache.params().to_vec())))
            }
            None => Ok(None),
        }
    }

    /// Every layer with a stable, human-readable name; transformer layers first.
    pub fn named_layers(&self) -> Vec<(String, &LayerParams<F>)> {
        let mut v = Vec::new();
        if let Some(st) = &self.transformer {
            let layers = st.net.layers();
            let n = layers.len();
            for (k, p) in layers.into_iter().enumerate() {
                let name = match n - k {
                    1 => "transformer.head".to_string(),
                    2 => "transformer.hidden".to_string(),
                    _ => format!("transformer.conv{k}"),
                };
                v.push((name, p));
            }
        }
        v.extend(self.classifier.named_layers());
        v
    }

    /// Same order as [`Model::named_layers`].
    pub fn layers_mut(&mut self) -> Vec<&mut LayerParams<F>> {
        let mut v = Vec::new();
        if let Some(st) = &mut self.transformer {
            v.extend(st.net.layers_mut());
        }
        v.extend(self.classifier.layers_mut());
        v
    }

    pub fn zero_grad(&mut self) {
        for p in self.layers_mut() {
            p.zero_grad();
        }
    }

    pub fn num_params(&self) -> usize {
        self.named_layers().iter().map(|(_, p)| p.num_params()).sum()
    }

    pub fn transformer_num_params(&self) -> usize {
        self.transformer
            .as_ref()
            .map(|st| st.net.layers().iter().map(|p| p.num_params()).sum())
            .unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch(n: usize, d: usize, t: usize, seed: u64) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v: Vec<f64> = (0..n * d * t).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
        Tensor::new(vec![n, d, t], v).unwrap()
    }

    #[test]
    fn zero_output_layer_gives_half() {
        let mut m = Model::<f64>::new(ModelVariant::Baseline, &ModelConfig::default(), 4, 48, 3).unwrap();
        m.classifier_mut().output_layer_mut().weights.fill(0.0);
        m.classifier_mut().output_layer_mut().bias.fill(0.0);
        let p = m.predict(&batch(5, 4, 48, 1)).unwrap();
        assert!(p.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn probabilities_in_open_interval() {
        let m = Model::<f64>::new(ModelVariant::Full, &ModelConfig::default(), 4, 48, 5).unwrap();
        let p = m.predict(&batch(8, 4, 48, 2)).unwrap();
        assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn classifier_param_count_shared_across_variants() {
        let cfg = ModelConfig::default();
        let counts: Vec<usize> = ModelVariant::ALL
            .iter()
            .map(|&v| Model::<f64>::new(v, &cfg, 4, 48, 1).unwrap().classifier().num_params())
            .collect();
        assert!(counts.windows(2).all(|w| w[0] == w[1]));
        let base = Model::<f64>::new(ModelVariant::Baseline, &cfg, 4, 48, 1).unwrap();
        assert_eq!(base.transformer_num_params(), 0);
        assert_eq!(base.num_params(), counts[0]);
    }

    #[test]
    fn identity_init_matches_baseline() {
        let cfg = ModelConfig::default();
        let x = batch(6, 4, 48, 11);
        let base = Model::<f64>::new(ModelVariant::Baseline, &cfg, 4, 48, 21).unwrap().predict(&x).unwrap();
        for v in [ModelVariant::Full, ModelVariant::TemporalOnly, ModelVariant::MagnitudeOnly] {
            let p = Model::<f64>::new(v, &cfg, 4, 48, 21).unwrap().predict(&x).unwrap();
            assert_eq!(p, base, "{v}");
        }
    }

    #[test]
    fn depth_must_fit_sequence() {
        let cfg = ModelConfig {
            classifier: ClassifierConfig {
                depth: 4,
                ..Default::default()
            },
            ..Default::default()
        };
        assert!(Model::<f64>::new(ModelVariant::Baseline, &cfg, 2, 16, 0).is_ok());
        assert!(matches!(
            Model::<f64>::new(ModelVariant::Baseline, &cfg, 2, 8, 0).unwrap_err(),
            Error::Config(_)
        ));
    }

    #[test]
    fn wrong_input_shape_rejected() {
        let m = Model::<f64>::new(ModelVariant::Baseline, &ModelConfig::default(), 4, 48, 0).unwrap();
        assert!(matches!(m.predict(&batch(2, 3, 48, 0)).unwrap_err(), Error::Config(_)));
    }

    #[test]
    fn variant_names_round_trip() {
        for v in ModelVariant::ALL {
            assert_eq!(v.as_str().parse::<ModelVariant>().unwrap(), v);
        }
        assert!("resnet".parse::<ModelVariant>().is_err());
    }
}
