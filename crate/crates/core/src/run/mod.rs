//! Run orchestration: configuration, per-instance progress, artifact storage
//! and crash recovery.
//!
//! A run lives in `runs/<run_id>/` under the data directory. Its state is
//! checkpointed after every instance transition with an atomic replace, so a
//! process killed at any point leaves a parseable `state.json`; resuming
//! restarts whatever was in flight.

mod config;
mod engine;
mod reference;
mod state;
pub mod store;

pub use config::{MethodRef, ModelRef, RunConfig, RunRequest, DEFAULT_RUN_CONCURRENCY};
pub use engine::{Engine, FaultPlan, RunOutcome, RunSnapshot, RunSummary};
pub use reference::{cache_key, ReferenceCache};
pub use state::{
    Counters, FailureInfo, InstanceState, InstanceStatus, InvalidTransition, RunPhase, RunState,
};
pub use store::{artifact, RunLock, RunStore, CONFIG_FILE, DATASET_FILE, REPORT_FILE, STATE_FILE};

use thiserror::Error;

use crate::dataset::DatasetError;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("run {0} not found")]
    RunNotFound(String),
    #[error("invalid configuration: {0}")]
    ConfigError(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("run {0} already has an active executor")]
    RunAlreadyActive(String),
    #[error("run {0} is not finished")]
    RunNotTerminal(String),
    #[error(transparent)]
    InvalidTransition(#[from] InvalidTransition),
    #[error("execution environment lost: {0}")]
    Environment(String),
    #[error("executor stopped by fault injection")]
    Killed,
    #[error("storage error: {0}")]
    Storage(#[from] std::io::Error),
}

impl RunError {
    pub fn code(&self) -> &'static str {
        match self {
            RunError::RunNotFound(_) => "RunNotFound",
            RunError::ConfigError(_) => "ConfigError",
            RunError::Dataset(e) => match e {
                DatasetError::NotADirectory(_) => "DatasetNotFound",
                _ => "DatasetError",
            },
            RunError::RunAlreadyActive(_) => "RunAlreadyActive",
            RunError::RunNotTerminal(_) => "RunNotTerminal",
            RunError::InvalidTransition(_) => "InvalidTransition",
            RunError::Environment(_) => "EnvironmentError",
            RunError::Killed => "Killed",
            RunError::Storage(_) => "StorageError",
        }
    }
}
