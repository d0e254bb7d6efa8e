use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{AccCells, Axis, ExperimentError, RunRecord};
use crate::metrics::{confidence_interval, IntervalSummary, DEFAULT_LEVEL};

/// Metric names in report order.
pub const METRICS: [&str; 7] = ["bias_amp", "acc", "ece", "acc_pos_a", "acc_pos_b", "acc_neg_a", "acc_neg_b"];

fn metric_values(bias_amp: f64, acc: f64, ece: f64, cells: &AccCells) -> [(&'static str, Option<f64>); 7] {
    let [pa, pb, na, nb] = cells.named();
    [("bias_amp", Some(bias_amp)), ("acc", Some(acc)), ("ece", Some(ece)), pa, pb, na, nb]
}

/// Per-metric summaries; metrics with no defined value are omitted.
pub type MetricSummaries = BTreeMap<String, IntervalSummary>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochSummary {
    pub epoch: usize,
    pub metrics: MetricSummaries,
}

/// Summary of all seeds at one axis value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub value: f64,
    pub n: usize,
    pub metrics: MetricSummaries,
    pub trajectory: Vec<EpochSummary>,
}

impl PointSummary {
    pub fn metric(&self, name: &str) -> Option<&IntervalSummary> {
        self.metrics.get(name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub name: String,
    pub axis: Axis,
    /// Data source kinds of the records, sorted, e.g. `["synthetic"]`.
    pub data: Vec<String>,
    pub points: Vec<PointSummary>,
}

/// One (ece, bias_amp) pair of point means.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPoint {
    pub value: f64,
    pub ece: f64,
    pub bias_amp: f64,
}

#[derive(Default)]
struct Collector(BTreeMap<&'static str, Vec<f64>>);

impl Collector {
    fn push(&mut self, values: [(&'static str, Option<f64>); 7]) {
        for (name, v) in values {
            if let Some(v) = v {
                self.0.entry(name).or_default().push(v);
            }
        }
    }

    /// Values are sorted before summarizing so the result does not depend
    /// on record order.
    fn finish(self) -> MetricSummaries {
        self.0
            .into_iter()
            .map(|(name, mut v)| {
                v.sort_by(f64::total_cmp);
                (name.to_string(), confidence_interval(&v, DEFAULT_LEVEL))
            })
            .collect()
    }
}

/// Mean and 95% interval per (axis value, metric), plus per-epoch
/// summaries for trajectory plots. Every record must carry a sweep point
/// on the same axis.
pub fn aggregate(name: &str, records: &[RunRecord]) -> Result<SweepSummary, ExperimentError> {
    let first = records.first().ok_or_else(|| ExperimentError::config("records", "nothing to aggregate"))?;
    let axis =
        first.sweep_point.ok_or_else(|| ExperimentError::config("sweep_point", "record is not part of a sweep"))?.axis;
    let mut by_value: BTreeMap<u64, (f64, Vec<&RunRecord>)> = BTreeMap::new();
    for r in records {
        let point =
            r.sweep_point.ok_or_else(|| ExperimentError::config("sweep_point", "record is not part of a sweep"))?;
        if point.axis != axis {
            return Err(ExperimentError::config("sweep_point", "records mix several axes"));
        }
        // Order-preserving key for finite floats.
        let bits = point.value.to_bits();
        let key = if point.value.is_sign_negative() { !bits } else { bits | (1 << 63) };
        by_value.entry(key).or_insert((point.value, Vec::new())).1.push(r);
    }
    let points = by_value
        .into_values()
        .map(|(value, group)| {
            let mut finals = Collector::default();
            let mut epochs: BTreeMap<usize, Collector> = BTreeMap::new();
            for r in &group {
                let f = &r.final_metrics;
                finals.push(metric_values(f.bias_amp, f.acc, f.ece, &f.acc_cells));
                for e in &r.trajectory {
                    epochs.entry(e.epoch).or_default().push(metric_values(e.bias_amp, e.acc, e.ece, &e.acc_cells));
                }
            }
            PointSummary {
                value,
                n: group.len(),
                metrics: finals.finish(),
                trajectory: epochs.into_iter().map(|(epoch, c)| EpochSummary { epoch, metrics: c.finish() }).collect(),
            }
        })
        .collect();
    let mut data: Vec<String> = records.iter().map(|r| r.config.source.kind().to_string()).collect();
    data.sort();
    data.dedup();
    Ok(SweepSummary { name: name.to_string(), axis, data, points })
}

/// One (ece, bias_amp) point per axis value, for calibration scatter plots.
pub fn ece_bias_pairs(summary: &SweepSummary) -> Vec<CalibrationPoint> {
    summary
        .points
        .iter()
        .filter_map(|p| {
            Some(CalibrationPoint { value: p.value, ece: p.metric("ece")?.mean, bias_amp: p.metric("bias_amp")?.mean })
        })
        .collect()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::experiment::{config::synthetic_json, EpochMetrics, FinalMetrics, SweepPoint, SCHEMA_VERSION};
    use crate::metrics::bias_amp;

    pub(crate) fn record(axis: Axis, value: f64, seed_index: usize, bias: f64, epochs: usize) -> RunRecord {
        let breakdown = bias_amp(&crate::metrics::bias_amp_fixture()).unwrap();
        let cells = AccCells { pos_a: Some(0.9), pos_b: None, neg_a: Some(0.5), neg_b: Some(bias) };
        let trajectory = (1..=epochs)
            .map(|epoch| EpochMetrics {
                epoch,
                lr: 0.1,
                train_loss: 1.0 / epoch as f64,
                bias_amp: bias * epoch as f64,
                acc: 0.8,
                ece: 0.05,
                acc_cells: cells,
            })
            .collect();
        RunRecord {
            schema_version: SCHEMA_VERSION,
            tool_version: "test".into(),
            trial_id: format!("{value}-{seed_index}"),
            config: serde_json::from_str(synthetic_json()).unwrap(),
            sweep_point: Some(SweepPoint { axis, value, seed_index }),
            effective_epochs: epochs,
            trajectory,
            final_metrics: FinalMetrics { bias_amp: bias, acc: 0.8, ece: 0.05 + bias, acc_cells: cells, breakdown },
            warnings: vec![],
            substreams: vec![],
            wall_time_secs: 0.0,
        }
    }

    #[test]
    fn constant_metric_has_zero_half_width() {
        let records: Vec<_> = (0..20).map(|s| record(Axis::Epsilon, 0.3, s, 0.125, 2)).collect();
        let summary = aggregate("c", &records).unwrap();
        assert_eq!(summary.points.len(), 1);
        let b = summary.points[0].metric("bias_amp").unwrap();
        assert_eq!((b.mean, b.half_width, b.n), (0.125, Some(0.0), 20));
        assert!(summary.points[0].metric("acc_pos_b").is_none());
        assert_eq!(summary.points[0].trajectory.len(), 2);
        assert_eq!(summary.points[0].trajectory[1].metrics["bias_amp"].mean, 0.25);
    }

    #[test]
    fn permutation_invariant() {
        let mut records: Vec<_> = (0..12)
            .map(|s| record(Axis::Width, [8.0, 16.0, 32.0][s % 3], s, 0.1 * s as f64 / 7.0 + 1e-3 / (s + 1) as f64, 3))
            .collect();
        let a = aggregate("p", &records).unwrap();
        records.reverse();
        records.swap(1, 7);
        let b = aggregate("p", &records).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.points.iter().map(|p| p.value).collect::<Vec<_>>(), vec![8.0, 16.0, 32.0]);
        let pairs = ece_bias_pairs(&a);
        assert_eq!(pairs.len(), 3);
        for (pair, p) in pairs.iter().zip(&a.points) {
            assert_eq!(pair.bias_amp, p.metrics["bias_amp"].mean);
            assert_eq!(pair.ece, p.metrics["ece"].mean);
        }
    }

    #[test]
    fn rejects_mixed_or_missing_axes() {
        assert!(aggregate("e", &[]).is_err());
        let mut r = record(Axis::Epsilon, 0.0, 0, 0.0, 1);
        let other = record(Axis::Depth, 1.0, 0, 0.0, 1);
        assert!(aggregate("m", &[r.clone(), other]).is_err());
        r.sweep_point = None;
        assert!(aggregate("n", &[r]).is_err());
    }
}
