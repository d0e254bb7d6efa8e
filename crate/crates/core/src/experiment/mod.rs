//! Trials, sweeps, aggregation and reporting.
//!
//! A trial builds biased train/test splits, trains one model and evaluates
//! it on the test split after every epoch. A sweep varies one axis of a
//! base trial over a grid of values and several seeds, persisting each
//! [`RunRecord`] as one JSONL line.

mod aggregate;
mod config;
mod pipeline;
mod report;
mod store;
mod sweep;
mod trial;

use thiserror::Error;

use crate::data::DataError;
use crate::metrics::MetricsError;
use crate::model::ModelError;

pub use aggregate::{
    aggregate, ece_bias_pairs, CalibrationPoint, EpochSummary, MetricSummaries, PointSummary, SweepSummary, METRICS,
};
pub use config::{DataSource, TrialConfig};
pub use pipeline::{build_datasets, BuiltData};
pub use report::{emit_report, render_svg, ChartPoint, ReportFiles, Series};
pub use store::{trial_id, RunStore, TrialFailure};
pub use sweep::{apply_axis, plan_trials, sweep, Axis, PlannedTrial, SweepConfig, SweepGrid, SweepOutcome};
pub use trial::{
    final_metrics, probe_group_recognizability, probe_trial, run_trial, run_trial_with_model, swap_roles, AccCells,
    EpochMetrics, FinalMetrics, RunRecord, SweepPoint,
};

/// Version of the run-record and config JSON schemas.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid configuration: `{field}` {message}")]
    Config { field: String, message: String },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{path}: line {line}: {message}")]
    Store { path: String, line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl ExperimentError {
    pub(crate) fn config(field: &str, message: impl Into<String>) -> Self {
        ExperimentError::Config { field: field.to_string(), message: message.into() }
    }

    /// True for errors caused by the configuration rather than by running it.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            ExperimentError::Config { .. }
                | ExperimentError::Unsupported(_)
                | ExperimentError::Data(DataError::Config { .. })
                | ExperimentError::Model(ModelError::Config { .. })
        )
    }
}
