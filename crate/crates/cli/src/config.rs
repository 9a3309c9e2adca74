//! Experiment configuration files (TOML) and data loading.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use seqtrans::data::{
    generate_synthetic, ingest_events, FeatureDecl, IngestOptions, SplitFractions, SyntheticDataset, SyntheticSpec,
};
use seqtrans::experiment::Splits;
use seqtrans::metrics::BootstrapConfig;
use seqtrans::search::HyperparamSpace;
use seqtrans::train::TrainConfig;
use seqtrans::{Error, ModelConfig, ModelVariant, Result, SequenceBatch64};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    /// Generate the benchmark in memory.
    Synthetic {
        #[serde(default)]
        spec: SyntheticSpec,
    },
    /// A dataset file written by `seqtrans generate`.
    Dataset { path: PathBuf },
    /// Hourly events plus labels, normalized by a fitted schema.
    Events {
        events: PathBuf,
        labels: PathBuf,
        schema: PathBuf,
        #[serde(default)]
        options: IngestOptions,
        /// Features to include when fitting the schema.
        #[serde(default)]
        features: Vec<FeatureDecl>,
    },
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic {
            spec: SyntheticSpec::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    #[serde(default = "default_variant")]
    pub variant: ModelVariant,
    /// Seeds weight initialization, shuffling and dropout.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub split_seed: u64,
    #[serde(default = "default_true")]
    pub stratified: bool,
    #[serde(default)]
    pub split: SplitFractions,
    /// Used when `--out` is not given; relative to the config file.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub training: TrainConfig,
    #[serde(default)]
    pub bootstrap: BootstrapConfig,
    #[serde(default)]
    pub search: HyperparamSpace,
    #[serde(default)]
    pub data: DataSource,
}

fn default_variant() -> ModelVariant {
    ModelVariant::Full
}

fn default_true() -> bool {
    true
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            variant: default_variant(),
            seed: 0,
            split_seed: 0,
            stratified: true,
            split: SplitFractions::default(),
            output_dir: None,
            model: ModelConfig::default(),
            training: TrainConfig::default(),
            bootstrap: BootstrapConfig::default(),
            search: HyperparamSpace::default(),
            data: DataSource::default(),
        }
    }
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Serde(e.to_string()))
    }

    /// Reads the file and makes relative paths relative to its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        match &mut cfg.data {
            DataSource::Synthetic { .. } => {}
            DataSource::Dataset { path } => resolve(base, path),
            DataSource::Events {
                events, labels, schema, ..
            } => {
                resolve(base, events);
                resolve(base, labels);
                resolve(base, schema);
            }
        }
        if let Some(out) = &mut cfg.output_dir {
            resolve(base, out);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "config version {} is not supported (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        self.model.classifier.validate()?;
        self.training.validate()?;
        self.search.validate()?;
        if let DataSource::Synthetic { spec } = &self.data {
            spec.validate()?;
        }
        Ok(())
    }

    /// Files the experiment reads, for the manifest.
    pub fn input_files(&self) -> Vec<PathBuf> {
        match &self.data {
            DataSource::Synthetic { .. } => vec![],
            DataSource::Dataset { path } => vec![path.clone()],
            DataSource::Events {
                events, labels, schema, ..
            } => vec![events.clone(), labels.clone(), schema.clone()],
        }
    }
}

pub struct LoadedData {
    pub batch: SequenceBatch64,
    pub notes: Vec<String>,
}

pub fn load_data(source: &DataSource) -> Result<LoadedData> {
    match source {
        DataSource::Synthetic { spec } => {
            Ok(LoadedData {
                batch: generate_synthetic(spec)?.batch,
                notes: vec![],
            })
        }
        DataSource::Dataset { path } => {
            Ok(LoadedData {
                batch: SyntheticDataset::load(path)?.batch,
                notes: vec![],
            })
        }
        DataSource::Events {
            events,
            labels,
            schema,
            options,
            ..
        } => {
            let report = ingest_events(events, schema, labels, *options)?;
            let notes = vec![
                format!("rows with unknown features: {}", report.rejected_unknown_feature),
                format!("rows outside the horizon: {}", report.rejected_out_of_horizon),
                format!("admissions without observations: {}", report.excluded_no_observations.len()),
                format!("admissions without labels: {}", report.excluded_unlabeled.len()),
            ];
            Ok(LoadedData {
                batch: report.batch,
                notes,
            })
        }
    }
}

pub fn make_splits(cfg: &ExperimentConfig, batch: &SequenceBatch64) -> Result<Splits<f64>> {
    Splits::new(batch, cfg.split, cfg.split_seed, cfg.stratified)
}
