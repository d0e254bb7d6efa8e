//! Controlled bias-amplification experiments.
//!
//! - [`data`]: dataset ingestion, synthetic data and bias injection.
//! - [`model`]: linear and MLP binary classifiers trained with Nesterov SGD.
//! - [`metrics`]: directional bias amplification, calibration error,
//!   disaggregated accuracy and confidence intervals.
//! - [`experiment`]: trials, sweeps, aggregation and reports.

pub mod data;
pub mod experiment;
pub mod metrics;
pub mod model;
pub mod rng;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
