//! Experiment orchestration: campaign runner, landscape sweep, histogram
//! experiment, configuration layering, and file export.

pub mod campaign;
pub mod config;
pub mod export;
pub mod histogram;
pub mod sweep;

pub use campaign::{
    check_campaign, run_campaign, write_campaign_outputs, CampaignResult, TrialResult,
};
pub use config::{load_config, ExperimentConfig, ExperimentKind};
pub use histogram::{check_histogram, run_histogram, write_histogram_outputs, HistogramResult};
pub use sweep::{run_sweep, write_sweep_outputs, SweepResult};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("check failed: {0}")]
    CheckFailed(String),
}

impl HarnessError {
    /// Process exit code the CLI maps this error to.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Io(_) | HarnessError::Json(_) => 3,
            HarnessError::CheckFailed(_) => 4,
        }
    }
}

impl From<crate::ga::GaError> for HarnessError {
    fn from(e: crate::ga::GaError) -> Self {
        HarnessError::Config(e.to_string())
    }
}

impl From<crate::detection::DetectionError> for HarnessError {
    fn from(e: crate::detection::DetectionError) -> Self {
        HarnessError::Config(e.to_string())
    }
}
