use serde::{Deserialize, Serialize};

use crate::data::{Class, Group};
use crate::model::PredictionRecord;

/// Accuracy per (class, group) cell, indexed `[class][group]`. Empty cells
/// hold `None`, never 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisaggregatedAccuracy {
    pub cells: [[Option<f64>; 2]; 2],
    pub counts: [[usize; 2]; 2],
}

impl DisaggregatedAccuracy {
    pub fn get(&self, class: Class, group: Group) -> Option<f64> {
        self.cells[class.index()][group.index()]
    }

    pub fn count(&self, class: Class, group: Group) -> usize {
        self.counts[class.index()][group.index()]
    }
}

pub fn disaggregated_accuracy(records: &[PredictionRecord]) -> DisaggregatedAccuracy {
    let mut counts = [[0usize; 2]; 2];
    let mut correct = [[0usize; 2]; 2];
    for r in records {
        let (c, g) = (r.true_class.index(), r.group.index());
        counts[c][g] += 1;
        if r.correct() {
            correct[c][g] += 1;
        }
    }
    let mut cells = [[None; 2]; 2];
    for c in 0..2 {
        for g in 0..2 {
            if counts[c][g] > 0 {
                cells[c][g] = Some(correct[c][g] as f64 / counts[c][g] as f64);
            }
        }
    }
    DisaggregatedAccuracy { cells, counts }
}

/// Overall accuracy; `None` for no records.
pub fn accuracy(records: &[PredictionRecord]) -> Option<f64> {
    (!records.is_empty()).then(|| records.iter().filter(|r| r.correct()).count() as f64 / records.len() as f64)
}
