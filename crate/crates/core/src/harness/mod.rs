//! Desk-scale scenario runner: ground truth from the dynamics engine,
//! simulated ranging and IMU streams, self-calibration, the filter, and
//! scoring against the truth.

mod actuation;
mod config;
mod export;
mod metrics;
mod scenario;

pub use actuation::{ActuationScript, Keyframe};
pub use config::{
    AnchorLayout, CalibrationMode, CalibrationPhase, FilterConfig, ImuConfig, MetricsConfig, RangingConfig,
    ScenarioConfig, ScenarioKind, Setting, SpuriousSample, StartPose,
};
pub use export::{export_run, write_calibration_log, ExportPaths, TrajectoryRecord};
pub use metrics::{
    compute_metrics, estimate_lag, face_history, EstimateSeries, Face, FaceDetector, FaceTransition, RunMetrics,
    TrackedEndCap, Trajectory,
};
pub use scenario::{
    calibrate_log, resting_pose, run_global_scenario, run_local_scenario, run_scenario, CalibrationSession,
    Scenario, ScenarioRun, TruthRun,
};

use std::path::Path;

use thiserror::Error;

use crate::calibration::CalibrationError;
use crate::dynamics::DynamicsError;
use crate::ranging::RangingError;
use crate::structure::{GeometryError, ModelError};
use crate::ukf::UkfError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Ranging(#[from] RangingError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    Ukf(#[from] UkfError),
    #[error("metrics: {0}")]
    Metrics(String),
    #[error("scenario aborted at t = {time:.3} s: {message}")]
    Aborted { time: f64, message: String },
    #[error("scenario: {0}")]
    Scenario(String),
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.display().to_string(), source }
    }
}
