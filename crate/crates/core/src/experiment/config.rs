use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::data::{AugmentKind, BiasConfig, GroupConvention, MixConfig, SynthConfig};
use crate::model::{ArchConfig, TrainConfig};

/// Where a trial's data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Synthetic {
        synth: SynthConfig,
    },
    /// IDX image/label file pairs (Fashion-MNIST).
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
    },
    Cifar10 {
        train: Vec<PathBuf>,
        test: Vec<PathBuf>,
    },
    Cifar100 {
        train: Vec<PathBuf>,
        test: Vec<PathBuf>,
    },
    /// Raw image caches written by `ingest`.
    RawCache {
        train: PathBuf,
        test: PathBuf,
        #[serde(default)]
        augment: Option<AugmentKind>,
    },
    /// Labelled example caches written by `generate`; used as-is, the bias
    /// configuration is not re-applied.
    Prepared {
        train: PathBuf,
        test: PathBuf,
    },
}

impl DataSource {
    /// The `kind` tag, e.g. `"synthetic"`.
    pub fn kind(&self) -> &'static str {
        match self {
            DataSource::Synthetic { .. } => "synthetic",
            DataSource::Idx { .. } => "idx",
            DataSource::Cifar10 { .. } => "cifar10",
            DataSource::Cifar100 { .. } => "cifar100",
            DataSource::RawCache { .. } => "raw_cache",
            DataSource::Prepared { .. } => "prepared",
        }
    }

    pub fn is_image(&self) -> bool {
        !matches!(self, DataSource::Synthetic { .. } | DataSource::Prepared { .. })
    }
}

fn default_fraction() -> f64 {
    1.0
}

/// Everything needed to reproduce one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialConfig {
    pub source: DataSource,
    pub bias: BiasConfig,
    /// Test-split bias; defaults to the training `epsilon`.
    #[serde(default)]
    pub test_epsilon: Option<f64>,
    /// Required for the mixing protocol on image sources.
    #[serde(default)]
    pub mix: Option<MixConfig>,
    /// Stratified training fraction `p`. Unless `train.epoch_scaling` is
    /// set explicitly, epochs are scaled by `1 / p`.
    #[serde(default = "default_fraction")]
    pub train_fraction: f64,
    /// `input_dimension` may be 0 to take it from the data.
    pub arch: ArchConfig,
    pub train: TrainConfig,
    pub seed: u64,
    #[serde(default)]
    pub role_swap: bool,
}

impl TrialConfig {
    pub fn test_bias(&self) -> BiasConfig {
        BiasConfig { epsilon: self.test_epsilon.unwrap_or(self.bias.epsilon), ..self.bias }
    }

    /// Training recipe with the subsample epoch scaling applied.
    pub fn effective_train_config(&self) -> TrainConfig {
        let mut cfg = self.train.clone();
        if cfg.epoch_scaling.is_none() && self.train_fraction < 1.0 {
            cfg.epoch_scaling = Some(self.train_fraction);
        }
        cfg
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        self.bias.validate()?;
        if let Some(eps) = self.test_epsilon {
            if !(0.0..=0.5).contains(&eps) {
                return Err(ExperimentError::config("test_epsilon", format!("must lie in [0, 0.5], got {eps}")));
            }
        }
        if let Some(mix) = &self.mix {
            mix.validate()?;
            if self.bias.convention != GroupConvention::Mixing {
                return Err(ExperimentError::config("mix", "requires the mixing group convention"));
            }
        }
        if self.source.is_image() && self.bias.convention == GroupConvention::Mixing && self.mix.is_none() {
            return Err(ExperimentError::config("mix", "the mixing convention on image data needs a mix block"));
        }
        if self.role_swap && self.bias.convention == GroupConvention::Mixing {
            return Err(ExperimentError::Unsupported("role swap is only defined for the inversion convention".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return Err(ExperimentError::config(
                "train_fraction",
                format!("must lie in (0, 1], got {}", self.train_fraction),
            ));
        }
        if let DataSource::Synthetic { synth } = &self.source {
            synth.validate()?;
        }
        let mut arch = self.arch;
        if arch.input_dimension == 0 {
            arch.input_dimension = 1;
        }
        arch.validate()?;
        self.train.validate()?;
        Ok(())
    }
}

#[cfg(test)]
pub(crate) fn synthetic_json() -> &'static str {
    r#"{
            "source": {"kind": "synthetic", "synth": {"dimension": 4, "class_margin": 1.0, "group_margin": 2.0, "noise_sigma": 1.0, "train_size": 100, "test_size": 100}},
            "bias": {"epsilon": 0.3, "convention": "inversion"},
            "arch": {"family": "mlp", "depth": 1, "width": 8, "input_dimension": 4},
            "train": {"epochs": 3},
            "seed": 7
        }"#
}
