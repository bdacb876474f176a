//! Episode metrics, grouped tables and the ablation matrix.

pub mod acceptance;
mod metrics;
mod suite;
mod zoo;

use thiserror::Error;

pub use metrics::{aggregate, compute_episode_metrics, path_weighted_success, rows_to_csv, AggregateRow, GroupKey, MetricsRecord};
pub use suite::{
    directional_checks, episode_seed, loop_study_seed, run_records, run_ablation_suite, run_oracle, run_variant, run_variant_on,
    AblationReport, AblationRow, DirectionalCheck, EpisodeResult, LoopStudy, LoopStudySeed, LoopTrap, Stat, SuiteConfig,
};
pub use zoo::{Inputs, ModelZoo, TrainingData, Variant, ZooConfig};

use crate::controller::ControllerError;
use crate::policies::PolicyError;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("trace {trace} does not belong to record {record}")]
    Mismatch { trace: String, record: String },
    #[error("no records to aggregate")]
    NoRecords,
    #[error("no trained model for variant {0}")]
    MissingModel(String),
    #[error("scene for episode {0} is missing from the dataset")]
    MissingScene(String),
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error("training failed: {0}")]
    Training(String),
}

impl From<PolicyError> for EvalError {
    fn from(e: PolicyError) -> Self {
        EvalError::Training(e.to_string())
    }
}
