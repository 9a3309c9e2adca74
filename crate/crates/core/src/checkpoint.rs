//! Model checkpoints as versioned JSON.
//!
//! Layout (`version` 1):
//!
//! ```text
//! {
//!   "format": "seqtrans-checkpoint",
//!   "version": 1,
//!   "variant": "full",
//!   "in_channels": 4,
//!   "seq_len": 48,
//!   "config": { "classifier": {..}, "transformer": {..} },
//!   "layers": [
//!     { "name": "transformer.conv0", "weight_shape": [16, 4, 5], "weights": [..],
//!       "bias_shape": [16], "bias": [..] },
//!     ...
//!   ]
//! }
//! ```
//!
//! Parameters are flat row-major `f64` arrays. Layers appear in the order of
//! [`Model::named_layers`]; dense weights are `[inputs, outputs]` and conv
//! weights `[out_channels, in_channels, kernel]`. The classifier flattens conv
//! features channel-major (`feature = channel * length + step`). Numbers are
//! written in shortest round-trip form, so files are byte-identical across
//! platforms for identical models.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classifier::{Model, ModelConfig, ModelVariant};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const CHECKPOINT_FORMAT: &str = "seqtrans-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub name: String,
    pub weight_shape: Vec<usize>,
    pub weights: Vec<f64>,
    pub bias_shape: Vec<usize>,
    pub bias: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub variant: ModelVariant,
    pub in_channels: usize,
    pub seq_len: usize,
    pub config: ModelConfig,
    pub layers: Vec<LayerRecord>,
}

impl Checkpoint {
    pub fn from_model<F: Scalar>(model: &Model<F>) -> Self {
        let (in_channels, seq_len) = model.input_shape();
        let layers = model
            .named_layers()
            .into_iter()
            .map(|(name, p)| LayerRecord {
                name,
                weight_shape: p.weights.shape().to_vec(),
                weights: p.weights.data().iter().map(|v| v.to_f64_lossy()).collect(),
                bias_shape: p.bias.shape().to_vec(),
                bias: p.bias.data().iter().map(|v| v.to_f64_lossy()).collect(),
            })
            .collect();
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            variant: model.variant(),
            in_channels,
            seq_len,
            config: model.config().clone(),
            layers,
        }
    }

    pub fn to_model<F: Scalar>(&self) -> Result<Model<F>> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::Serde(format!("not a checkpoint (format {:?})", self.format)));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Serde(format!(
                "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
                self.version
            )));
        }
        let mut model = Model::new(self.variant, &self.config, self.in_channels, self.seq_len, 0)?;
        let names: Vec<String> = model.named_layers().into_iter().map(|(n, _)| n).collect();
        if names.len() != self.layers.len() {
            return Err(Error::Serde(format!(
                "checkpoint has {} layers, model expects {}",
                self.layers.len(),
                names.len()
            )));
        }
        for ((name, params), rec) in names.iter().zip(model.layers_mut()).zip(&self.layers) {
            if *name != rec.name
                || params.weights.shape() != rec.weight_shape.as_slice()
                || params.bias.shape() != rec.bias_shape.as_slice()
            {
                return Err(Error::Serde(format!(
                    "layer {:?} {:?}/{:?} does not match model layer {name:?} {:?}/{:?}",
                    rec.name,
                    rec.weight_shape,
                    rec.bias_shape,
                    params.weights.shape(),
                    params.bias.shape()
                )));
            }
            params.weights = Tensor::from_f64(rec.weight_shape.clone(), &rec.weights)?;
            params.bias = Tensor::from_f64(rec.bias_shape.clone(), &rec.bias)?;
            params.zero_grad();
        }
        Ok(model)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
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
