//! Expected calibration error over equal-width confidence bins.

use serde::{Deserialize, Serialize};

use crate::model::PredictionRecord;

pub const DEFAULT_BIN_COUNT: usize = 15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    /// `None` for an empty bin.
    pub mean_confidence: Option<f64>,
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTable {
    pub bins: Vec<CalibrationBin>,
    pub ece: f64,
}

/// Bin `k` (0-based) covers `(k/B, (k+1)/B]`; bin 0 also holds 0.
/// Out-of-range confidences are clamped into the first or last bin.
pub fn ece_bin_index(confidence: f64, bins: usize) -> usize {
    if confidence <= 0.0 {
        return 0;
    }
    let b = bins as f64;
    let mut k = ((confidence * b).ceil() as usize).clamp(1, bins) - 1;
    // Guard against the product landing on the wrong side of a boundary.
    if k > 0 && confidence <= k as f64 / b {
        k -= 1;
    } else if k + 1 < bins && confidence > (k + 1) as f64 / b {
        k += 1;
    }
    k
}

/// `ECE = sum_b (n_b / N) |acc_b - conf_b|`, evaluated as
/// `sum_b |correct_b - sum_conf_b| / N`. An empty record set scores 0.
pub fn ece(records: &[PredictionRecord], bin_count: usize) -> CalibrationTable {
    let bin_count = bin_count.max(1);
    let mut counts = vec![0usize; bin_count];
    let mut correct = vec![0usize; bin_count];
    let mut conf_sum = vec![0.0f64; bin_count];
    for r in records {
        let k = ece_bin_index(r.confidence, bin_count);
        counts[k] += 1;
        conf_sum[k] += r.confidence;
        if r.correct() {
            correct[k] += 1;
        }
    }
    let n = records.len();
    let mut gap = 0.0;
    let bins = (0..bin_count)
        .map(|k| {
            let c = counts[k];
            if c > 0 {
                gap += (correct[k] as f64 - conf_sum[k]).abs();
            }
            CalibrationBin {
                lower: k as f64 / bin_count as f64,
                upper: (k + 1) as f64 / bin_count as f64,
                count: c,
                mean_confidence: (c > 0).then(|| conf_sum[k] / c as f64),
                accuracy: (c > 0).then(|| correct[k] as f64 / c as f64),
            }
        })
        .collect();
    let ece = if n == 0 { 0.0 } else { gap / n as f64 };
    CalibrationTable { bins, ece }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Class, Group};

    fn rec(confidence: f64, correct: bool) -> PredictionRecord {
        PredictionRecord {
            true_class: Class::Positive,
            predicted_class: if correct { Class::Positive } else { Class::Negative },
            confidence,
            group: Group::A,
        }
    }

    #[test]
    fn bin_edges() {
        assert_eq!(ece_bin_index(0.0, 15), 0);
        assert_eq!(ece_bin_index(1.0 / 15.0, 15), 0);
        assert_eq!(ece_bin_index(1.0 / 15.0 + 1e-12, 15), 1);
        assert_eq!(ece_bin_index(0.5, 15), 7);
        assert_eq!(ece_bin_index(0.6, 15), 8);
        assert_eq!(ece_bin_index(0.9, 15), 13);
        assert_eq!(ece_bin_index(1.0, 15), 14);
        for k in 1..=15 {
            assert_eq!(ece_bin_index(k as f64 / 15.0, 15), k - 1);
        }
    }

    #[test]
    fn fully_confident_and_correct_is_zero() {
        let t = ece(&[rec(1.0, true); 10], 15);
        assert_eq!(t.ece, 0.0);
        assert_eq!(t.bins[14].count, 10);
    }

    #[test]
    fn four_record_fixture() {
        let records = [rec(0.9, true), rec(0.9, true), rec(0.6, true), rec(0.6, false)];
        let t = ece(&records, 15);
        // Decimal inputs are not exact in binary; the result is within a few ulps.
        assert!((t.ece - 0.1).abs() <= 1e-15, "{}", t.ece);
        assert_eq!(t.bins[13].accuracy, Some(1.0));
        assert_eq!(t.bins[8].accuracy, Some(0.5));
        assert_eq!(t.bins.iter().map(|b| b.count).sum::<usize>(), 4);
    }

    #[test]
    fn calibrated_constant_confidence() {
        let records: Vec<_> = (0..10).map(|i| rec(0.7, i < 7)).collect();
        assert!(ece(&records, 15).ece.abs() < 1e-15);
    }

    #[test]
    fn empty_bins_are_undefined_and_empty_input_scores_zero() {
        let t = ece(&[], 15);
        assert_eq!(t.ece, 0.0);
        assert!(t.bins.iter().all(|b| b.count == 0 && b.accuracy.is_none()));
    }
}
