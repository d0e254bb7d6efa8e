//! Bias amplification, calibration and accuracy measures over prediction
//! records.

mod accuracy;
mod bias_amp;
mod calibration;
mod stats;

use thiserror::Error;

pub use accuracy::{accuracy, disaggregated_accuracy, DisaggregatedAccuracy};
#[cfg(test)]
pub(crate) use bias_amp::tests::fixture as bias_amp_fixture;
pub use bias_amp::{bias_amp, conditional_rates, direction_y, BiasAmpBreakdown, CellBreakdown, ConditionalRates};
pub use calibration::{ece, ece_bin_index, CalibrationBin, CalibrationTable, DEFAULT_BIN_COUNT};
pub use stats::{confidence_interval, spearman, IntervalSummary, DEFAULT_LEVEL};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("group `{0}` has no records")]
    EmptyGroup(&'static str),
    #[error("class {0} never occurs in the true labels")]
    EmptyClass(i8),
    #[error("invalid argument: {0}")]
    Invalid(String),
}
