//! Learned input-conditioned resampling and magnitude normalization in front
//! of a 1D CNN for binary classification of multichannel time series.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix `f64`, which the tools and tests use.

pub mod checkpoint;
pub mod classifier;
pub mod data;
pub mod error;
pub mod experiment;
pub mod io;
pub mod layers;
pub mod metrics;
pub mod optim;
pub mod plot;
pub mod scalar;
pub mod search;
pub mod tensor;
pub mod train;
pub mod transformer;

pub use checkpoint::Checkpoint;
pub use classifier::{ClassifierConfig, Model, ModelConfig, ModelVariant};
pub use data::SequenceBatch;
pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::{LayerParams, Tensor};
pub use transformer::{LeakyClamp, TransformMode, TransformNetConfig, TransformParams};

pub type Tensor64 = tensor::Tensor<f64>;
pub type Tensor32 = tensor::Tensor<f32>;
pub type Model64 = classifier::Model<f64>;
pub type Model32 = classifier::Model<f32>;
pub type SequenceBatch64 = data::SequenceBatch<f64>;
pub type SequenceBatch32 = data::SequenceBatch<f32>;
pub type TransformParams64 = transformer::TransformParams<f64>;
