use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

pub const DEFAULT_LEVEL: f64 = 0.95;

/// Mean with a two-sided Student-t interval (`n - 1` degrees of freedom,
/// sample standard deviation).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalSummary {
    pub mean: f64,
    /// `None` when fewer than two values were summarized.
    pub half_width: Option<f64>,
    pub level: f64,
    pub n: usize,
}

impl IntervalSummary {
    pub fn low(&self) -> Option<f64> {
        self.half_width.map(|h| self.mean - h)
    }

    pub fn high(&self) -> Option<f64> {
        self.half_width.map(|h| self.mean + h)
    }

    pub fn contains(&self, v: f64) -> bool {
        matches!((self.low(), self.high()), (Some(l), Some(h)) if l <= v && v <= h)
    }
}

/// # Panics
/// On an empty slice or a level outside `(0, 1)`.
pub fn confidence_interval(values: &[f64], level: f64) -> IntervalSummary {
    assert!(!values.is_empty(), "confidence interval of no values");
    assert!(level > 0.0 && level < 1.0, "level must lie in (0, 1)");
    let n = values.len();
    if values.iter().all(|v| *v == values[0]) {
        let half_width = (n >= 2).then_some(0.0);
        return IntervalSummary { mean: values[0], half_width, level, n };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return IntervalSummary { mean, half_width: None, level, n };
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("degrees of freedom are positive")
        .inverse_cdf(1.0 - (1.0 - level) / 2.0);
    IntervalSummary { mean, half_width: Some(t * (var / n as f64).sqrt()), level, n }
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties. `None` for
/// fewer than two pairs or a constant input.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}
