//! Directional bias amplification from groups to classes.
//!
//! For every group `a` and class `t`:
//!
//! - `delta_at = Pr(pred = t | a) - Pr(true = t | a)`
//! - `y_at = [Pr(true = t, a) > Pr(true = t) * Pr(a)]`
//! - score `= 1/4 * sum_at (y_at * delta_at - (1 - y_at) * delta_at)`
//!
//! All rates are measured on one record set (the test split). Counts stay
//! integral until the final division.

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::data::{Class, Group};
use crate::model::PredictionRecord;

#[derive(Debug, Clone, Copy, Default)]
struct Counts {
    /// `[group][class]` counts of true labels.
    truth: [[u64; 2]; 2],
    /// `[group][class]` counts of predicted labels.
    predicted: [[u64; 2]; 2],
}

impl Counts {
    fn tally(records: &[PredictionRecord]) -> Self {
        let mut c = Counts::default();
        for r in records {
            c.truth[r.group.index()][r.true_class.index()] += 1;
            c.predicted[r.group.index()][r.predicted_class.index()] += 1;
        }
        c
    }

    fn group_total(&self, g: Group) -> u64 {
        self.truth[g.index()].iter().sum()
    }

    fn class_total(&self, t: Class) -> u64 {
        self.truth.iter().map(|row| row[t.index()]).sum()
    }

    fn total(&self) -> u64 {
        self.truth.iter().flatten().sum()
    }

    fn require_groups(&self) -> Result<(), MetricsError> {
        for g in Group::ALL {
            if self.group_total(g) == 0 {
                return Err(MetricsError::EmptyGroup(g.name()));
            }
        }
        Ok(())
    }

    /// Exact Iverson bracket on integer counts: `n_at * N > n_t * n_a`.
    fn direction(&self, g: Group, t: Class) -> bool {
        let joint = u128::from(self.truth[g.index()][t.index()]) * u128::from(self.total());
        joint > u128::from(self.class_total(t)) * u128::from(self.group_total(g))
    }
}

/// Per-group conditional class rates, indexed `[group][class]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionalRates {
    pub dataset: [[f64; 2]; 2],
    pub prediction: [[f64; 2]; 2],
}

impl ConditionalRates {
    pub fn dataset_rate(&self, g: Group, t: Class) -> f64 {
        self.dataset[g.index()][t.index()]
    }

    pub fn prediction_rate(&self, g: Group, t: Class) -> f64 {
        self.prediction[g.index()][t.index()]
    }
}

pub fn conditional_rates(records: &[PredictionRecord]) -> Result<ConditionalRates, MetricsError> {
    let c = Counts::tally(records);
    c.require_groups()?;
    let mut rates = ConditionalRates { dataset: [[0.0; 2]; 2], prediction: [[0.0; 2]; 2] };
    for g in Group::ALL {
        let n = c.group_total(g) as f64;
        for t in Class::ALL {
            rates.dataset[g.index()][t.index()] = c.truth[g.index()][t.index()] as f64 / n;
            rates.prediction[g.index()][t.index()] = c.predicted[g.index()][t.index()] as f64 / n;
        }
    }
    Ok(rates)
}

pub fn direction_y(records: &[PredictionRecord], group: Group, class: Class) -> Result<bool, MetricsError> {
    let c = Counts::tally(records);
    c.require_groups()?;
    Ok(c.direction(group, class))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellBreakdown {
    pub group: Group,
    pub class: Class,
    pub dataset_rate: f64,
    pub prediction_rate: f64,
    pub delta: f64,
    pub direction: bool,
    /// The model never predicts this class for this group although the
    /// class occurs in it; the prediction rate is then 0.
    pub prediction_absent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasAmpBreakdown {
    /// Cells in the order (a,-1), (a,+1), (b,-1), (b,+1).
    pub cells: Vec<CellBreakdown>,
    /// Positive values amplify, negative values dampen the dataset bias.
    pub bias_amp: f64,
}

impl BiasAmpBreakdown {
    pub fn cell(&self, group: Group, class: Class) -> &CellBreakdown {
        &self.cells[group.index() * 2 + class.index()]
    }
}

pub fn bias_amp(records: &[PredictionRecord]) -> Result<BiasAmpBreakdown, MetricsError> {
    let c = Counts::tally(records);
    c.require_groups()?;
    for t in Class::ALL {
        if c.class_total(t) == 0 {
            return Err(MetricsError::EmptyClass(i8::from(t)));
        }
    }
    let mut cells = Vec::with_capacity(4);
    // Signed numerator per group: sum_t s_at * (m_at - n_at).
    let mut numerators = [0i128; 2];
    for g in Group::ALL {
        let n_a = c.group_total(g);
        for t in Class::ALL {
            let n_at = c.truth[g.index()][t.index()];
            let m_at = c.predicted[g.index()][t.index()];
            let direction = c.direction(g, t);
            let diff = i128::from(m_at) - i128::from(n_at);
            numerators[g.index()] += if direction { diff } else { -diff };
            cells.push(CellBreakdown {
                group: g,
                class: t,
                dataset_rate: n_at as f64 / n_a as f64,
                prediction_rate: m_at as f64 / n_a as f64,
                delta: diff as f64 / n_a as f64,
                direction,
                prediction_absent: m_at == 0 && n_at > 0,
            });
        }
    }
    let (n_a, n_b) = (i128::from(c.group_total(Group::A)), i128::from(c.group_total(Group::B)));
    let numerator = numerators[0] * n_b + numerators[1] * n_a;
    let denominator = 4 * n_a * n_b;
    Ok(BiasAmpBreakdown { cells, bias_amp: numerator as f64 / denominator as f64 })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    fn rec(t: i8, p: i8, g: Group) -> PredictionRecord {
        PredictionRecord {
            true_class: Class::try_from(t).unwrap(),
            predicted_class: Class::try_from(p).unwrap(),
            confidence: 0.75,
            group: g,
        }
    }

    /// Group a: 8 positives, 2 negatives; group b: 2 positives, 8 negatives.
    /// Predictions: every positive in a and one of its negatives predicted
    /// +1 (9 of 10); every negative in b and one of its positives predicted
    /// -1 (9 of 10).
    pub(crate) fn fixture() -> Vec<PredictionRecord> {
        let mut r = Vec::new();
        r.extend((0..8).map(|_| rec(1, 1, Group::A)));
        r.push(rec(-1, 1, Group::A));
        r.push(rec(-1, -1, Group::A));
        r.push(rec(1, -1, Group::B));
        r.push(rec(1, 1, Group::B));
        r.extend((0..8).map(|_| rec(-1, -1, Group::B)));
        r
    }

    #[test]
    fn fixture_rates() {
        let rates = conditional_rates(&fixture()).unwrap();
        assert_eq!(rates.dataset_rate(Group::A, Class::Positive), 0.8);
        assert_eq!(rates.dataset_rate(Group::B, Class::Positive), 0.2);
        assert_eq!(rates.prediction_rate(Group::A, Class::Positive), 0.9);
        for g in Group::ALL {
            let s: f64 = Class::ALL.iter().map(|&t| rates.dataset_rate(g, t)).sum();
            assert_eq!(s, 1.0);
        }
    }

    #[test]
    fn fixture_directions() {
        let f = fixture();
        assert!(direction_y(&f, Group::A, Class::Positive).unwrap());
        assert!(!direction_y(&f, Group::A, Class::Negative).unwrap());
        assert!(!direction_y(&f, Group::B, Class::Positive).unwrap());
        assert!(direction_y(&f, Group::B, Class::Negative).unwrap());
    }

    #[test]
    fn fixture_score_is_exactly_a_tenth() {
        let b = bias_amp(&fixture()).unwrap();
        assert_eq!(b.bias_amp, 0.1);
        assert!((b.cell(Group::A, Class::Positive).delta - 0.1).abs() < 1e-15);
        assert!((b.cell(Group::B, Class::Positive).delta + 0.1).abs() < 1e-15);
    }

    #[test]
    fn independence_gives_zero_direction() {
        // Each group is half positive: n_at * N == n_t * n_a.
        let r = vec![rec(1, 1, Group::A), rec(-1, -1, Group::A), rec(1, 1, Group::B), rec(-1, -1, Group::B)];
        for g in Group::ALL {
            for t in Class::ALL {
                assert!(!direction_y(&r, g, t).unwrap());
            }
        }
    }

    #[test]
    fn perfect_predictions_score_zero() {
        let r: Vec<_> = fixture()
            .into_iter()
            .map(|mut r| {
                r.predicted_class = r.true_class;
                r
            })
            .collect();
        let b = bias_amp(&r).unwrap();
        assert_eq!(b.bias_amp, 0.0);
        assert!(b.cells.iter().all(|c| c.delta == 0.0));
    }

    #[test]
    fn all_positive_group() {
        let r = vec![rec(1, 1, Group::A), rec(1, 1, Group::A), rec(-1, 1, Group::B)];
        let rates = conditional_rates(&r).unwrap();
        assert_eq!(rates.dataset_rate(Group::A, Class::Positive), 1.0);
    }

    #[test]
    fn missing_group_or_class_is_an_error() {
        let only_a = vec![rec(1, 1, Group::A), rec(-1, 1, Group::A)];
        assert_eq!(conditional_rates(&only_a).unwrap_err(), MetricsError::EmptyGroup("b"));
        let only_pos = vec![rec(1, 1, Group::A), rec(1, -1, Group::B)];
        assert!(conditional_rates(&only_pos).is_ok());
        assert_eq!(bias_amp(&only_pos).unwrap_err(), MetricsError::EmptyClass(-1));
    }

    #[test]
    fn absent_prediction_flagged() {
        let r = vec![rec(1, -1, Group::A), rec(-1, -1, Group::A), rec(1, 1, Group::B), rec(-1, -1, Group::B)];
        let b = bias_amp(&r).unwrap();
        assert!(b.cell(Group::A, Class::Positive).prediction_absent);
        assert!(!b.cell(Group::B, Class::Positive).prediction_absent);
    }

    #[test]
    fn flipping_predictions_negates_deltas_when_groups_are_balanced() {
        // Each group holds as many positives as negatives.
        let mut r = Vec::new();
        for (i, g) in [(0, Group::A), (1, Group::B)] {
            for k in 0..6 {
                let t = if k % 2 == 0 { 1 } else { -1 };
                let p = if (k + i) % 3 == 0 { -t } else { t };
                r.push(rec(t, p, g));
            }
        }
        let flipped: Vec<_> =
            r.iter().map(|x| PredictionRecord { predicted_class: x.predicted_class.flip(), ..*x }).collect();
        let a = bias_amp(&r).unwrap();
        let b = bias_amp(&flipped).unwrap();
        for (x, y) in a.cells.iter().zip(&b.cells) {
            assert_eq!(x.delta, -y.delta);
        }
    }
}
