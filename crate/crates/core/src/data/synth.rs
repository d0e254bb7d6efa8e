//! Synthetic two-factor feature data.
//!
//! Each example is `class_margin * t * e1 + group_margin * g * e2 + noise`,
//! with `t` the class sign, `g` the group sign (`a` = +1, `b` = -1) and
//! isotropic Gaussian noise. The two margins set how easy class and group
//! are to recognize relative to each other.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{draw_group, BiasConfig, Class, DataError, Dataset, Example, Layout, Split};
use crate::rng::substream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub dimension: usize,
    pub class_margin: f64,
    pub group_margin: f64,
    pub noise_sigma: f64,
    pub train_size: usize,
    pub test_size: usize,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.dimension < 2 {
            return Err(DataError::config("dimension", format!("must be at least 2, got {}", self.dimension)));
        }
        for (field, v) in [
            ("class_margin", self.class_margin),
            ("group_margin", self.group_margin),
            ("noise_sigma", self.noise_sigma),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(DataError::config(field, format!("must be finite and non-negative, got {v}")));
            }
        }
        if self.train_size == 0 || self.test_size == 0 {
            return Err(DataError::config("train_size/test_size", "splits must be nonempty"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSplits {
    pub train: Dataset,
    pub test: Dataset,
}

/// Generates one split of `size` examples from the substream
/// `("synth/<split>", seed)`.
pub fn synth_split(
    cfg: &SynthConfig,
    bias: &BiasConfig,
    size: usize,
    split: Split,
    seed: u64,
) -> Result<Dataset, DataError> {
    cfg.validate()?;
    bias.validate()?;
    let label = match split {
        Split::Train => "synth/train",
        Split::Test => "synth/test",
    };
    let mut rng = substream(label, seed);
    let mut examples = Vec::with_capacity(size);
    for _ in 0..size {
        let class = if rng.random::<bool>() { Class::Positive } else { Class::Negative };
        let group = draw_group(class, bias, rng.random::<f64>());
        let mut features: Vec<f64> =
            (0..cfg.dimension).map(|_| cfg.noise_sigma * rng.sample::<f64, _>(StandardNormal)).collect();
        features[0] += cfg.class_margin * class.sign();
        features[1] += cfg.group_margin * group.sign();
        examples.push(Example { features, class, group });
    }
    Ok(Dataset { split, layout: Layout::Vector { dimension: cfg.dimension }, examples, normalization: None })
}

pub fn synth_generate(cfg: &SynthConfig, bias: &BiasConfig, seed: u64) -> Result<SynthSplits, DataError> {
    Ok(SynthSplits {
        train: synth_split(cfg, bias, cfg.train_size, Split::Train, seed)?,
        test: synth_split(cfg, bias, cfg.test_size, Split::Test, seed)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Group, GroupConvention};

    fn cfg() -> SynthConfig {
        SynthConfig {
            dimension: 4,
            class_margin: 1.0,
            group_margin: 2.0,
            noise_sigma: 0.0,
            train_size: 50,
            test_size: 30,
        }
    }

    #[test]
    fn noiseless_features_are_exact() {
        let bias = BiasConfig::new(0.2, GroupConvention::Inversion).unwrap();
        let s = synth_generate(&cfg(), &bias, 1).unwrap();
        assert_eq!(s.train.len(), 50);
        assert_eq!(s.test.len(), 30);
        for e in &s.train.examples {
            assert_eq!(e.features, vec![e.class.sign(), 2.0 * e.group.sign(), 0.0, 0.0]);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let bias = BiasConfig::new(0.3, GroupConvention::Mixing).unwrap();
        let mut c = cfg();
        c.noise_sigma = 1.0;
        assert_eq!(synth_generate(&c, &bias, 5).unwrap(), synth_generate(&c, &bias, 5).unwrap());
        assert_ne!(synth_generate(&c, &bias, 5).unwrap(), synth_generate(&c, &bias, 6).unwrap());
    }

    #[test]
    fn fully_biased_groups_follow_class() {
        let bias = BiasConfig::new(0.5, GroupConvention::Mixing).unwrap();
        let s = synth_generate(&cfg(), &bias, 2).unwrap();
        for e in &s.train.examples {
            assert_eq!(e.group, if e.class == Class::Positive { Group::A } else { Group::B });
        }
    }

    #[test]
    fn rejects_bad_config() {
        let bias = BiasConfig::new(0.0, GroupConvention::Mixing).unwrap();
        let mut c = cfg();
        c.dimension = 1;
        assert!(synth_generate(&c, &bias, 0).is_err());
        let mut c = cfg();
        c.noise_sigma = f64::NAN;
        assert!(synth_generate(&c, &bias, 0).is_err());
    }
}
