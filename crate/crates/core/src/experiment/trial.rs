use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{build_datasets, trial_id, Axis, ExperimentError, TrialConfig, SCHEMA_VERSION};
use crate::data::{Class, Dataset, Group, GroupConvention};
use crate::metrics::{
    accuracy, bias_amp, disaggregated_accuracy, ece, BiasAmpBreakdown, DisaggregatedAccuracy, DEFAULT_BIN_COUNT,
};
use crate::model::{predict, predict_inputs, train, ArchConfig, ModelError, ModelState, PredictionRecord, TrainConfig};
use crate::rng::{substream_id, SubstreamId};
use crate::TOOL_VERSION;

/// Accuracy per (class, group) cell; `null` when the cell is empty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccCells {
    pub pos_a: Option<f64>,
    pub pos_b: Option<f64>,
    pub neg_a: Option<f64>,
    pub neg_b: Option<f64>,
}

impl From<&DisaggregatedAccuracy> for AccCells {
    fn from(d: &DisaggregatedAccuracy) -> Self {
        AccCells {
            pos_a: d.get(Class::Positive, Group::A),
            pos_b: d.get(Class::Positive, Group::B),
            neg_a: d.get(Class::Negative, Group::A),
            neg_b: d.get(Class::Negative, Group::B),
        }
    }
}

impl AccCells {
    pub fn named(&self) -> [(&'static str, Option<f64>); 4] {
        [("acc_pos_a", self.pos_a), ("acc_pos_b", self.pos_b), ("acc_neg_a", self.neg_a), ("acc_neg_b", self.neg_b)]
    }
}

/// Test-split measurements after one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub bias_amp: f64,
    pub acc: f64,
    pub ece: f64,
    pub acc_cells: AccCells,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalMetrics {
    pub bias_amp: f64,
    pub acc: f64,
    pub ece: f64,
    pub acc_cells: AccCells,
    pub breakdown: BiasAmpBreakdown,
}

/// Position of a trial inside a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub axis: Axis,
    pub value: f64,
    pub seed_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema_version: u32,
    pub tool_version: String,
    pub trial_id: String,
    pub config: TrialConfig,
    #[serde(default)]
    pub sweep_point: Option<SweepPoint>,
    pub effective_epochs: usize,
    pub trajectory: Vec<EpochMetrics>,
    pub final_metrics: FinalMetrics,
    pub warnings: Vec<String>,
    pub substreams: Vec<SubstreamId>,
    pub wall_time_secs: f64,
}

fn measure(records: &[PredictionRecord]) -> Result<(f64, f64, f64, AccCells, BiasAmpBreakdown), ExperimentError> {
    let breakdown = bias_amp(records)?;
    let acc = accuracy(records).unwrap_or(0.0);
    let calibration = ece(records, DEFAULT_BIN_COUNT);
    let cells = AccCells::from(&disaggregated_accuracy(records));
    Ok((breakdown.bias_amp, acc, calibration.ece, cells, breakdown))
}

/// Final metrics of a trained model on a test split.
pub fn final_metrics(model: &ModelState, test: &Dataset) -> Result<FinalMetrics, ExperimentError> {
    let records = predict(model, test)?;
    let (bias_amp, acc, ece, acc_cells, breakdown) = measure(&records)?;
    Ok(FinalMetrics { bias_amp, acc, ece, acc_cells, breakdown })
}

fn resolve_arch(arch: &ArchConfig, data: &Dataset) -> ArchConfig {
    let mut arch = *arch;
    if arch.input_dimension == 0 {
        arch.input_dimension = data.layout.input_dimension();
    }
    arch
}

/// Runs one trial and also returns the trained model.
pub fn run_trial_with_model(cfg: &TrialConfig) -> Result<(RunRecord, ModelState), ExperimentError> {
    let started = Instant::now();
    let built = build_datasets(cfg)?;
    if built.train.is_empty() {
        return Err(ModelError::Empty.into());
    }
    let arch = resolve_arch(&cfg.arch, &built.train);
    let train_cfg = cfg.effective_train_config();
    let test_inputs = built.test.model_inputs();
    let mut trajectory = Vec::with_capacity(train_cfg.effective_epochs());
    let model = train::<_, ExperimentError>(&arch, &train_cfg, &built.train, cfg.seed, |snap| {
        let records = predict_inputs(snap.state, &test_inputs, &built.test.examples)?;
        let (bias_amp, acc, ece, acc_cells, _) = measure(&records)?;
        trajectory.push(EpochMetrics {
            epoch: snap.epoch,
            lr: snap.lr,
            train_loss: snap.train_loss,
            bias_amp,
            acc,
            ece,
            acc_cells,
        });
        Ok(())
    })?;
    let final_metrics = final_metrics(&model, &built.test)?;
    let mut substreams = built.substreams;
    for label in ["init", "train/shuffle", "train/augment"] {
        substreams.push(substream_id(label, cfg.seed));
    }
    let record = RunRecord {
        schema_version: SCHEMA_VERSION,
        tool_version: TOOL_VERSION.to_string(),
        trial_id: trial_id(cfg),
        config: cfg.clone(),
        sweep_point: None,
        effective_epochs: train_cfg.effective_epochs(),
        trajectory,
        final_metrics,
        warnings: built.warnings,
        substreams,
        wall_time_secs: started.elapsed().as_secs_f64(),
    };
    Ok((record, model))
}

/// Builds the data, trains with per-epoch test evaluation and returns the
/// sealed record.
pub fn run_trial(cfg: &TrialConfig) -> Result<RunRecord, ExperimentError> {
    run_trial_with_model(cfg).map(|(r, _)| r)
}

/// Exchanges the class and group roles of an inversion-protocol trial.
pub fn swap_roles(cfg: &TrialConfig) -> Result<TrialConfig, ExperimentError> {
    if cfg.bias.convention == GroupConvention::Mixing {
        return Err(ExperimentError::Unsupported("role swap is only defined for the inversion convention".into()));
    }
    Ok(TrialConfig { role_swap: !cfg.role_swap, ..cfg.clone() })
}

/// Trains a fresh model to predict the group label and returns its test
/// accuracy.
pub fn probe_group_recognizability(
    train_data: &Dataset,
    test_data: &Dataset,
    arch: &ArchConfig,
    train_cfg: &TrainConfig,
    seed: u64,
) -> Result<f64, ExperimentError> {
    let (mut train_data, mut test_data) = (train_data.clone(), test_data.clone());
    train_data.swap_roles();
    test_data.swap_roles();
    let arch = resolve_arch(arch, &train_data);
    let model = train::<_, ExperimentError>(&arch, train_cfg, &train_data, seed, |_| Ok(()))?;
    let records = predict(&model, &test_data)?;
    Ok(accuracy(&records).unwrap_or(0.0))
}

/// Probe on the datasets a trial configuration would build.
pub fn probe_trial(cfg: &TrialConfig) -> Result<f64, ExperimentError> {
    let built = build_datasets(cfg)?;
    probe_group_recognizability(&built.train, &built.test, &cfg.arch, &cfg.effective_train_config(), cfg.seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{BiasConfig, SynthConfig};
    use crate::experiment::DataSource;
    use crate::metrics::confidence_interval;

    fn synth_cfg(epsilon: f64, synth: SynthConfig, epochs: usize) -> TrialConfig {
        TrialConfig {
            source: DataSource::Synthetic { synth },
            bias: BiasConfig::new(epsilon, GroupConvention::Inversion).unwrap(),
            test_epsilon: None,
            mix: None,
            train_fraction: 1.0,
            arch: ArchConfig::mlp(0, 1, 8),
            train: TrainConfig::with_epochs(epochs),
            seed: 1,
            role_swap: false,
        }
    }

    fn small() -> SynthConfig {
        SynthConfig {
            dimension: 4,
            class_margin: 1.0,
            group_margin: 2.0,
            noise_sigma: 1.0,
            train_size: 400,
            test_size: 400,
        }
    }

    fn without_time(mut r: RunRecord) -> RunRecord {
        r.wall_time_secs = 0.0;
        r
    }

    #[test]
    fn trial_is_reproducible_apart_from_time() {
        let cfg = synth_cfg(0.3, small(), 3);
        let a = without_time(run_trial(&cfg).unwrap());
        let b = without_time(run_trial(&cfg).unwrap());
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_eq!(a.trajectory.len(), 3);
        assert_eq!(a.trajectory.last().unwrap().bias_amp, a.final_metrics.bias_amp);
    }

    #[test]
    fn subsampled_trial_scales_trajectory() {
        let mut cfg = synth_cfg(0.3, small(), 2);
        cfg.train_fraction = 0.5;
        let r = run_trial(&cfg).unwrap();
        assert_eq!(r.effective_epochs, 4);
        assert_eq!(r.trajectory.len(), 4);
    }

    #[test]
    fn swap_is_an_involution_and_rejects_mixing() {
        let cfg = synth_cfg(0.3, small(), 1);
        let swapped = swap_roles(&cfg).unwrap();
        assert!(swapped.role_swap);
        assert_eq!(swap_roles(&swapped).unwrap(), cfg);
        let mut mixing = cfg.clone();
        mixing.bias.convention = GroupConvention::Mixing;
        assert!(matches!(swap_roles(&mixing), Err(ExperimentError::Unsupported(_))));
    }

    #[test]
    fn probe_separable_group_is_perfect() {
        let synth = SynthConfig {
            dimension: 3,
            class_margin: 0.5,
            group_margin: 4.0,
            noise_sigma: 0.0,
            train_size: 300,
            test_size: 300,
        };
        let cfg = synth_cfg(0.2, synth, 10);
        let acc = probe_trial(&cfg).unwrap();
        assert_eq!(acc, 1.0);
        assert_eq!(acc, probe_trial(&cfg).unwrap());
    }

    #[test]
    fn probe_without_group_signal_is_chance() {
        // Binomial oracle: with no group signal and no class/group
        // dependence, test accuracy ~ Binomial(n, 1/2) / n; 99.99% bound.
        let n = 2000usize;
        let synth = SynthConfig {
            dimension: 3,
            class_margin: 1.0,
            group_margin: 0.0,
            noise_sigma: 1.0,
            train_size: 2000,
            test_size: n,
        };
        let cfg = synth_cfg(0.0, synth, 5);
        let acc = probe_trial(&cfg).unwrap();
        let bound = 3.8906 * (0.25 / n as f64).sqrt();
        assert!((acc - 0.5).abs() <= bound, "probe accuracy {acc}");
    }

    #[test]
    fn zero_bias_amplification_is_small_on_average() {
        let values: Vec<f64> = (0..5)
            .map(|s| {
                let mut cfg = synth_cfg(0.0, small(), 3);
                cfg.seed = s;
                run_trial(&cfg).unwrap().final_metrics.bias_amp
            })
            .collect();
        let ci = confidence_interval(&values, 0.95);
        assert!(ci.mean.abs() < 0.05, "{ci:?}");
    }
}
