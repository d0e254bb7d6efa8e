//! Training configuration and the warmup + step-decay learning-rate schedule.

use serde::{Deserialize, Serialize};

use super::ModelError;

fn default_batch_size() -> usize {
    128
}
fn default_base_lr() -> f64 {
    0.1
}
fn default_warmup_lr() -> f64 {
    0.01
}
fn default_warmup_epochs() -> usize {
    1
}
fn default_milestones() -> Vec<f64> {
    vec![0.5, 0.75]
}
fn default_decay_factor() -> f64 {
    10.0
}
fn default_momentum() -> f64 {
    0.9
}
fn default_weight_decay() -> f64 {
    1e-4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_base_lr")]
    pub base_lr: f64,
    #[serde(default = "default_warmup_lr")]
    pub warmup_lr: f64,
    #[serde(default = "default_warmup_epochs")]
    pub warmup_epochs: usize,
    /// Fractions of the (effective) epoch budget after which the rate decays.
    #[serde(default = "default_milestones")]
    pub decay_milestone_fractions: Vec<f64>,
    #[serde(default = "default_decay_factor")]
    pub decay_factor: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    #[serde(default)]
    pub augmentation: bool,
    /// Training-set fraction `p`; the epoch budget becomes `round(E / p)`.
    #[serde(default)]
    pub epoch_scaling: Option<f64>,
}

impl TrainConfig {
    /// Defaults of the reference recipe with `epochs` epochs.
    pub fn with_epochs(epochs: usize) -> Self {
        TrainConfig {
            epochs,
            batch_size: default_batch_size(),
            base_lr: default_base_lr(),
            warmup_lr: default_warmup_lr(),
            warmup_epochs: default_warmup_epochs(),
            decay_milestone_fractions: default_milestones(),
            decay_factor: default_decay_factor(),
            momentum: default_momentum(),
            weight_decay: default_weight_decay(),
            augmentation: false,
            epoch_scaling: None,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.epochs == 0 {
            return Err(ModelError::config("epochs", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(ModelError::config("batch_size", "must be at least 1"));
        }
        let fr = &self.decay_milestone_fractions;
        if fr.iter().any(|f| !(*f > 0.0 && *f < 1.0)) || fr.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ModelError::config(
                "decay_milestone_fractions",
                format!("must be strictly increasing values in (0, 1), got {fr:?}"),
            ));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(ModelError::config(
                "weight_decay",
                format!("must be finite and >= 0, got {}", self.weight_decay),
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(ModelError::config("momentum", format!("must lie in [0, 1), got {}", self.momentum)));
        }
        for (field, v) in
            [("base_lr", self.base_lr), ("warmup_lr", self.warmup_lr), ("decay_factor", self.decay_factor)]
        {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ModelError::config(field, format!("must be finite and positive, got {v}")));
            }
        }
        if let Some(p) = self.epoch_scaling {
            if !(p > 0.0 && p <= 1.0) {
                return Err(ModelError::config("epoch_scaling", format!("must lie in (0, 1], got {p}")));
            }
        }
        Ok(())
    }

    /// `round(E / p)` when epoch scaling is set, else `E`.
    pub fn effective_epochs(&self) -> usize {
        match self.epoch_scaling {
            Some(p) => round_half_up(self.epochs as f64 / p).max(1),
            None => self.epochs,
        }
    }
}

pub fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

/// Decay epochs `round(fraction * E_eff)`.
pub fn milestones(cfg: &TrainConfig) -> Vec<usize> {
    let total = cfg.effective_epochs() as f64;
    cfg.decay_milestone_fractions.iter().map(|f| round_half_up(f * total)).collect()
}

/// Learning rate for 1-based `epoch`: `warmup_lr` during warmup, then
/// `base_lr / decay_factor^k` with `k` the number of milestones already
/// passed (a milestone `m` applies from epoch `m + 1`).
pub fn lr_at(cfg: &TrainConfig, epoch: usize) -> f64 {
    if epoch <= cfg.warmup_epochs {
        return cfg.warmup_lr;
    }
    let passed = milestones(cfg).iter().filter(|&&m| epoch > m).count();
    cfg.base_lr / cfg.decay_factor.powi(passed as i32)
}
