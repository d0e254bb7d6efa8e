use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::mpsc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    run_trial, trial_id, DataSource, ExperimentError, RunRecord, RunStore, SweepPoint, TrialConfig, TrialFailure,
};
use crate::rng::derive_seed;

/// The single configuration knob a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Epsilon,
    Eta,
    Depth,
    Width,
    WeightDecay,
    TrainFraction,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Epsilon => "epsilon",
            Axis::Eta => "eta",
            Axis::Depth => "depth",
            Axis::Width => "width",
            Axis::WeightDecay => "weight_decay",
            Axis::TrainFraction => "train_fraction",
        }
    }

    /// Axes whose values span orders of magnitude are charted on a log scale.
    pub fn log_scale(self) -> bool {
        self == Axis::WeightDecay
    }
}

fn default_seeds() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub axis: Axis,
    pub values: Vec<f64>,
    #[serde(default = "default_seeds")]
    pub seeds: usize,
}

impl SweepGrid {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.values.is_empty() {
            return Err(ExperimentError::config("values", "must not be empty"));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(ExperimentError::config("values", "must be finite"));
        }
        if self.values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ExperimentError::config("values", "must be strictly increasing"));
        }
        if self.seeds == 0 {
            return Err(ExperimentError::config("seeds", "must be at least 1"));
        }
        Ok(())
    }
}

/// A named sweep: base trial plus the grid to vary it over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub name: String,
    pub base: TrialConfig,
    pub grid: SweepGrid,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.name.is_empty() || !self.name.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) {
            return Err(ExperimentError::config("name", "must be a non-empty file-name-safe string"));
        }
        self.grid.validate()?;
        plan_trials(&self.grid, &self.base).map(|_| ())
    }
}

fn integral(axis: Axis, value: f64) -> Result<usize, ExperimentError> {
    if value < 0.0 || value.fract() != 0.0 {
        return Err(ExperimentError::config(axis.name(), format!("values must be non-negative integers, got {value}")));
    }
    Ok(value as usize)
}

/// The base config with one axis set to `value`.
///
/// On synthetic data the eta axis moves the combined margin budget from the
/// class direction to the group direction: `group_margin = eta * budget`.
pub fn apply_axis(base: &TrialConfig, axis: Axis, value: f64) -> Result<TrialConfig, ExperimentError> {
    let mut cfg = base.clone();
    match axis {
        Axis::Epsilon => cfg.bias.epsilon = value,
        Axis::Eta => {
            if !(0.0..=1.0).contains(&value) {
                return Err(ExperimentError::config("eta", format!("must lie in [0, 1], got {value}")));
            }
            if let Some(mix) = cfg.mix.as_mut() {
                mix.eta = value;
            } else if let DataSource::Synthetic { synth } = &mut cfg.source {
                let budget = synth.class_margin + synth.group_margin;
                synth.group_margin = value * budget;
                synth.class_margin = (1.0 - value) * budget;
            } else {
                return Err(ExperimentError::Unsupported("the eta axis needs a mix block or synthetic data".into()));
            }
        }
        Axis::Depth => cfg.arch.depth = integral(axis, value)?,
        Axis::Width => cfg.arch.width = integral(axis, value)?,
        Axis::WeightDecay => cfg.train.weight_decay = value,
        Axis::TrainFraction => cfg.train_fraction = value,
    }
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannedTrial {
    pub point: SweepPoint,
    pub config: TrialConfig,
    pub trial_id: String,
}

/// Every (value, seed index) trial of a grid, value-major.
pub fn plan_trials(grid: &SweepGrid, base: &TrialConfig) -> Result<Vec<PlannedTrial>, ExperimentError> {
    grid.validate()?;
    let mut out = Vec::with_capacity(grid.values.len() * grid.seeds);
    for &value in &grid.values {
        let cfg = apply_axis(base, grid.axis, value)?;
        for seed_index in 0..grid.seeds {
            let mut config = cfg.clone();
            config.seed = derive_seed("sweep/trial", base.seed, &[value.to_bits(), seed_index as u64]);
            out.push(PlannedTrial {
                point: SweepPoint { axis: grid.axis, value, seed_index },
                trial_id: trial_id(&config),
                config,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    /// Sealed records of this sweep ordered by (value, seed index),
    /// including ones completed by earlier runs.
    pub records: Vec<RunRecord>,
    pub failures: Vec<TrialFailure>,
    pub skipped: usize,
    pub ran: usize,
}

fn run_planned(trial: &PlannedTrial) -> Result<RunRecord, ExperimentError> {
    let mut record = catch_unwind(AssertUnwindSafe(|| run_trial(&trial.config)))
        .unwrap_or_else(|_| Err(ExperimentError::Unsupported("trial panicked".into())))?;
    record.sweep_point = Some(trial.point);
    Ok(record)
}

/// Runs every pending trial of `cfg` with at most `concurrency` trials in
/// flight. Records are appended to `store` by a single writer as trials
/// complete; failed trials go to the quarantine file and the sweep goes on.
pub fn sweep(cfg: &SweepConfig, store: &RunStore, concurrency: usize) -> Result<SweepOutcome, ExperimentError> {
    cfg.validate()?;
    let plan = plan_trials(&cfg.grid, &cfg.base)?;
    let done = store.load_completed()?;
    let pending: Vec<&PlannedTrial> = plan.iter().filter(|t| !done.contains(&t.trial_id)).collect();
    let skipped = plan.len() - pending.len();
    if skipped > 0 {
        log::info!("{}: resuming, {skipped} of {} trials already complete", cfg.name, plan.len());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(concurrency.max(1))
        .build()
        .map_err(|e| ExperimentError::config("concurrency", e.to_string()))?;

    let (tx, rx) = mpsc::channel::<(&PlannedTrial, Result<RunRecord, ExperimentError>)>();
    let total = pending.len();
    let (write_result, failures) = std::thread::scope(|scope| {
        let writer = scope.spawn(move || -> (Result<(), ExperimentError>, Vec<TrialFailure>) {
            let mut failures = Vec::new();
            let mut finished = 0usize;
            for (trial, result) in rx {
                finished += 1;
                let written = match result {
                    Ok(record) => {
                        log::info!(
                            "{}: [{finished}/{total}] {}={} seed {} bias_amp {:.6}",
                            cfg.name,
                            trial.point.axis.name(),
                            trial.point.value,
                            trial.point.seed_index,
                            record.final_metrics.bias_amp
                        );
                        store.append(&record)
                    }
                    Err(err) => {
                        log::warn!("{}: trial {} failed: {err}", cfg.name, trial.trial_id);
                        let failure = TrialFailure::new(&trial.config, Some(trial.point), &err);
                        let written = store.append_failure(&failure);
                        failures.push(failure);
                        written
                    }
                };
                if let Err(e) = written {
                    return (Err(e), failures);
                }
            }
            (Ok(()), failures)
        });
        pool.install(|| {
            pending.par_iter().for_each_with(tx, |tx, trial| {
                // A closed channel means the writer stopped on an I/O error.
                let _ = tx.send((trial, run_planned(trial)));
            })
        });
        writer.join().expect("writer thread panicked")
    });
    write_result?;

    let planned: BTreeSet<&str> = plan.iter().map(|t| t.trial_id.as_str()).collect();
    let mut seen = BTreeSet::new();
    let mut records: Vec<RunRecord> = store
        .load()?
        .into_iter()
        .filter(|r| planned.contains(r.trial_id.as_str()) && seen.insert(r.trial_id.clone()))
        .collect();
    records.sort_by(|a, b| {
        let key = |r: &RunRecord| r.sweep_point.map(|p| (p.value, p.seed_index)).unwrap_or((f64::NAN, 0));
        let (ka, kb) = (key(a), key(b));
        ka.0.total_cmp(&kb.0).then(ka.1.cmp(&kb.1))
    });
    Ok(SweepOutcome { records, failures, skipped, ran: total })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::config::synthetic_json;

    fn base() -> TrialConfig {
        let mut cfg: TrialConfig = serde_json::from_str(synthetic_json()).unwrap();
        cfg.train.epochs = 2;
        cfg
    }

    fn grid(axis: Axis, values: &[f64], seeds: usize) -> SweepGrid {
        SweepGrid { axis, values: values.to_vec(), seeds }
    }

    #[test]
    fn plan_cardinality_and_distinct_seeds() {
        let plan = plan_trials(&grid(Axis::Epsilon, &[0.0, 0.15, 0.3, 0.45], 20), &base()).unwrap();
        assert_eq!(plan.len(), 80);
        let seeds: BTreeSet<u64> = plan.iter().map(|t| t.config.seed).collect();
        assert_eq!(seeds.len(), 80);
        assert_eq!(plan[21].point, SweepPoint { axis: Axis::Epsilon, value: 0.15, seed_index: 1 });
        assert_eq!(plan[21].config.bias.epsilon, 0.15);
    }

    #[test]
    fn grid_validation() {
        assert!(grid(Axis::Epsilon, &[], 1).validate().is_err());
        assert!(grid(Axis::Epsilon, &[0.1, 0.1], 1).validate().is_err());
        assert!(grid(Axis::Epsilon, &[0.1], 0).validate().is_err());
        assert!(plan_trials(&grid(Axis::Epsilon, &[0.6], 1), &base()).is_err());
        assert!(plan_trials(&grid(Axis::Depth, &[1.5], 1), &base()).is_err());
    }

    #[test]
    fn axes_touch_their_field() {
        let b = base();
        assert_eq!(apply_axis(&b, Axis::Depth, 3.0).unwrap().arch.depth, 3);
        assert_eq!(apply_axis(&b, Axis::Width, 16.0).unwrap().arch.width, 16);
        assert_eq!(apply_axis(&b, Axis::WeightDecay, 5e-4).unwrap().train.weight_decay, 5e-4);
        assert_eq!(apply_axis(&b, Axis::TrainFraction, 0.25).unwrap().train_fraction, 0.25);
        let eta = apply_axis(&b, Axis::Eta, 0.25).unwrap();
        match eta.source {
            DataSource::Synthetic { synth } => {
                assert_eq!(synth.group_margin, 0.75);
                assert_eq!(synth.class_margin, 2.25);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn sweep_runs_resumes_and_is_order_independent() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SweepConfig { name: "t".into(), base: base(), grid: grid(Axis::Epsilon, &[0.0, 0.3], 2) };
        let store = RunStore::new(dir.path().join("t.jsonl"));
        let first = sweep(&cfg, &store, 3).unwrap();
        assert_eq!((first.records.len(), first.ran, first.skipped), (4, 4, 0));
        let again = sweep(&cfg, &store, 1).unwrap();
        assert_eq!((again.records.len(), again.ran, again.skipped), (4, 0, 4));
        assert_eq!(std::fs::read_to_string(store.path()).unwrap().lines().count(), 4);

        let serial_store = RunStore::new(dir.path().join("serial.jsonl"));
        let serial = sweep(&cfg, &serial_store, 1).unwrap();
        for (a, b) in first.records.iter().zip(&serial.records) {
            assert_eq!(a.trial_id, b.trial_id);
            assert_eq!(a.trajectory, b.trajectory);
            assert_eq!(a.final_metrics, b.final_metrics);
        }
    }

    #[test]
    fn failing_trials_are_quarantined() {
        let dir = tempfile::tempdir().unwrap();
        let mut b = base();
        b.train.warmup_lr = 1e300;
        b.train.warmup_epochs = 2;
        let cfg = SweepConfig { name: "bad".into(), base: b, grid: grid(Axis::Epsilon, &[0.1], 2) };
        let store = RunStore::new(dir.path().join("bad.jsonl"));
        let out = sweep(&cfg, &store, 2).unwrap();
        assert_eq!((out.failures.len(), out.records.len()), (2, 0));
        assert_eq!(store.load_failures().unwrap(), out.failures);
        assert!(out.failures[0].error.contains("diverged"), "{}", out.failures[0].error);
    }
}
