//! Seeded experiment sweeps over the learners in `stackelberg-core`.

pub mod config;
pub mod harness;
pub mod output;
pub mod summary;

pub use config::{Constants, ExperimentConfig, Instance, InstanceSpec, Setting};
pub use harness::{gap_curve, run_experiment, GapPoint, TrialRecord};
pub use summary::{summarize, wilson_interval, Summary};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Core(#[from] stackelberg_core::Error),
    #[error("io: {0}")]
    Io(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}
