//! Dataset construction: ingestion of image datasets, synthetic feature
//! data, and the transforms that inject a controlled class/group bias.

mod cache;
mod ingest;
mod synth;
mod transform;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::{read_dataset, read_raw, write_dataset, write_raw, CACHE_MAGIC, CACHE_VERSION};
pub use ingest::{ingest, ingest_cifar, ingest_idx, read_idx_images, read_idx_labels, ImageFormat};
pub use synth::{synth_generate, synth_split, SynthConfig, SynthSplits};
pub use transform::{
    assign_groups, binarize_labels, compute_normalization, draw_group, invert_image, mix_images, stratified_subsample,
    BinaryLabelMap, Subsample,
};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid configuration: `{field}` {message}")]
    Config { field: String, message: String },
    #[error("format error at byte offset {offset}: {message}")]
    Format { offset: u64, message: String },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("empty dataset: {0}")]
    Empty(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl DataError {
    pub(crate) fn config(field: &str, message: impl Into<String>) -> Self {
        DataError::Config { field: field.to_string(), message: message.into() }
    }

    pub(crate) fn format(offset: u64, message: impl Into<String>) -> Self {
        DataError::Format { offset, message: message.into() }
    }
}

/// Binary class label, serialized as `-1` / `1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "i8", into = "i8")]
pub enum Class {
    Negative,
    Positive,
}

impl Class {
    pub const ALL: [Class; 2] = [Class::Negative, Class::Positive];

    pub fn sign(self) -> f64 {
        match self {
            Class::Negative => -1.0,
            Class::Positive => 1.0,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Class::Negative => 0,
            Class::Positive => 1,
        }
    }

    /// Target value for binary cross-entropy.
    pub fn target(self) -> f64 {
        self.index() as f64
    }

    pub fn flip(self) -> Class {
        match self {
            Class::Negative => Class::Positive,
            Class::Positive => Class::Negative,
        }
    }
}

impl From<Class> for i8 {
    fn from(c: Class) -> i8 {
        match c {
            Class::Negative => -1,
            Class::Positive => 1,
        }
    }
}

impl TryFrom<i8> for Class {
    type Error = String;

    fn try_from(v: i8) -> Result<Self, Self::Error> {
        match v {
            -1 => Ok(Class::Negative),
            1 => Ok(Class::Positive),
            other => Err(format!("class label must be -1 or 1, got {other}")),
        }
    }
}

/// Binary group label, serialized as `"a"` / `"b"`.
///
/// Under the inversion protocol `B` marks inverted images. Under the mixing
/// protocol each group is one source class of overlay images.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    A,
    B,
}

impl Group {
    pub const ALL: [Group; 2] = [Group::A, Group::B];

    pub fn index(self) -> usize {
        match self {
            Group::A => 0,
            Group::B => 1,
        }
    }

    pub fn sign(self) -> f64 {
        match self {
            Group::A => 1.0,
            Group::B => -1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Group::A => "a",
            Group::B => "b",
        }
    }

    pub(crate) fn from_class(c: Class) -> Group {
        match c {
            Class::Positive => Group::A,
            Class::Negative => Group::B,
        }
    }

    pub(crate) fn to_class(self) -> Class {
        match self {
            Group::A => Class::Positive,
            Group::B => Class::Negative,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageShape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl ImageShape {
    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Decoded image dataset with its original multi-class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDataset {
    pub split: Split,
    pub shape: ImageShape,
    /// Number of original classes `K`; labels lie in `[0, K)`.
    pub class_count: u32,
    /// Channel-major pixels, `shape.len()` bytes per image.
    pub pixels: Vec<u8>,
    pub labels: Vec<u16>,
}

impl RawDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let n = self.shape.len();
        &self.pixels[i * n..(i + 1) * n]
    }
}

/// One labelled sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub features: Vec<f64>,
    pub class: Class,
    pub group: Group,
}

/// Which training-time augmentation an image dataset receives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentKind {
    /// Random crop back to the native size without padding, then flip.
    FashionMnist,
    /// 4-pixel zero padding, random 32x32 crop, then flip.
    Cifar,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layout {
    Vector { dimension: usize },
    Image { shape: ImageShape, augment: Option<AugmentKind> },
}

impl Layout {
    pub fn input_dimension(&self) -> usize {
        match self {
            Layout::Vector { dimension } => *dimension,
            Layout::Image { shape, .. } => shape.len(),
        }
    }
}

/// A labelled split ready for training or evaluation.
///
/// Image features are kept on the raw pixel scale; `normalization`, when
/// present, is applied when features are fed to a model.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub split: Split,
    pub layout: Layout,
    pub examples: Vec<Example>,
    pub normalization: Option<NormalizationStats>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Features as the model sees them (normalized when stats are attached).
    pub fn model_inputs(&self) -> Vec<Vec<f64>> {
        self.examples
            .iter()
            .map(|e| match (&self.normalization, &self.layout) {
                (Some(stats), Layout::Image { shape, .. }) => stats.apply(&e.features, shape),
                _ => e.features.clone(),
            })
            .collect()
    }

    /// Exchanges the roles of class and group on every example. Pixels are
    /// left untouched.
    pub fn swap_roles(&mut self) {
        for e in &mut self.examples {
            let class = e.group.to_class();
            e.group = Group::from_class(e.class);
            e.class = class;
        }
    }

    /// Per (class, group) example counts, indexed `[class][group]`.
    pub fn cell_counts(&self) -> [[usize; 2]; 2] {
        let mut counts = [[0; 2]; 2];
        for e in &self.examples {
            counts[e.class.index()][e.group.index()] += 1;
        }
        counts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupConvention {
    /// Positives are inverted (group `b`) with rate 1/2 - eps, negatives
    /// with rate 1/2 + eps.
    Inversion,
    /// Positives join group `a` with probability 1/2 + eps, negatives join
    /// group `b` with probability 1/2 + eps.
    Mixing,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiasConfig {
    pub epsilon: f64,
    pub convention: GroupConvention,
}

impl BiasConfig {
    pub fn new(epsilon: f64, convention: GroupConvention) -> Result<Self, DataError> {
        let cfg = BiasConfig { epsilon, convention };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if !(0.0..=0.5).contains(&self.epsilon) {
            return Err(DataError::config("epsilon", format!("must lie in [0, 0.5], got {}", self.epsilon)));
        }
        Ok(())
    }
}

/// Overlay configuration for the image-mixing protocol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixConfig {
    pub eta: f64,
    /// Original class ids supplying the overlay images of groups `a`, `b`.
    pub group_class_ids: [u16; 2],
    /// Original class ids of the positive and the negative task class.
    pub task_class_ids: [u16; 2],
}

impl MixConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(DataError::config("eta", format!("must lie in [0, 1], got {}", self.eta)));
        }
        let ids = [self.group_class_ids[0], self.group_class_ids[1], self.task_class_ids[0], self.task_class_ids[1]];
        for i in 0..ids.len() {
            for j in i + 1..ids.len() {
                if ids[i] == ids[j] {
                    return Err(DataError::config(
                        "group_class_ids/task_class_ids",
                        format!("the four class ids must be distinct, {} repeats", ids[i]),
                    ));
                }
            }
        }
        Ok(())
    }
}

pub const STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormalizationStats {
    /// `(x - mean[c]) / std[c]` for every pixel of channel `c`.
    pub fn apply(&self, features: &[f64], shape: &ImageShape) -> Vec<f64> {
        let plane = shape.height * shape.width;
        features
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let c = i / plane;
                (v - self.mean[c]) / self.std[c]
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_serializes_as_sign() {
        assert_eq!(serde_json::to_string(&Class::Positive).unwrap(), "1");
        assert_eq!(serde_json::from_str::<Class>("-1").unwrap(), Class::Negative);
        assert!(serde_json::from_str::<Class>("0").is_err());
        assert_eq!(serde_json::to_string(&Group::B).unwrap(), "\"b\"");
    }

    #[test]
    fn epsilon_bound_names_field() {
        let err = BiasConfig::new(0.7, GroupConvention::Inversion).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("epsilon") && msg.contains("[0, 0.5]"), "{msg}");
        assert!(BiasConfig::new(0.5, GroupConvention::Mixing).is_ok());
    }

    #[test]
    fn mix_config_requires_distinct_ids() {
        let mut cfg = MixConfig { eta: 0.5, group_class_ids: [0, 1], task_class_ids: [2, 3] };
        assert!(cfg.validate().is_ok());
        cfg.task_class_ids = [1, 3];
        assert!(cfg.validate().is_err());
        cfg.task_class_ids = [2, 3];
        cfg.eta = 1.5;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn swap_roles_is_an_involution() {
        let mut ds = Dataset {
            split: Split::Train,
            layout: Layout::Vector { dimension: 1 },
            examples: vec![
                Example { features: vec![0.0], class: Class::Positive, group: Group::B },
                Example { features: vec![1.0], class: Class::Negative, group: Group::A },
            ],
            normalization: None,
        };
        let original = ds.clone();
        ds.swap_roles();
        assert_eq!(ds.examples[0].class, Class::Negative);
        assert_eq!(ds.examples[0].group, Group::A);
        ds.swap_roles();
        assert_eq!(ds, original);
    }
}
