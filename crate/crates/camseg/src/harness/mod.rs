//! Experiment harness: configuration, the two experiment pipelines,
//! reports, and artifact-only metric recomputation.

pub mod config;
pub mod experiment;
pub mod report;

pub use config::{load_config, DatasetSource, ExperimentConfig, SynthParams, CONFIG_VERSION};
pub use experiment::{
    dataset_hash, experiment1, experiment2, recompute_report, resolved_precision, RunPaths,
};
pub use report::{
    parse_report, render_report, ExperimentReport, ReportFormat, ReportRow, REPORT_VERSION,
};

use crate::data::DataError;
use crate::gradcam::GradCamError;
use crate::metrics::MetricsError;
use crate::nn::{CheckpointError, NnError};

/// Anything that can go wrong while running an experiment end to end.
#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("report error: {0}")]
    Report(String),
    #[error("dataset error: {0}")]
    Dataset(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    GradCam(#[from] GradCamError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
