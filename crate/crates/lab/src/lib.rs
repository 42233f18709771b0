//! Experiment orchestration for the martingale transform laboratory:
//! configs, runners that tie the three estimators together, report emission,
//! a config-hash result cache, and the shipped reproduction recipes.

use thiserror::Error;

pub mod cache;
pub mod config;
pub mod experiments;
pub mod recipes;
pub mod report;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("bad config: {0}")]
    BadConfig(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("config kind {got} does not match the requested runner {want}")]
    KindMismatch { got: String, want: String },
    #[error("cache miss for the given config")]
    CacheMiss,
    #[error("{context}: {message}")]
    Runner { context: String, message: String },
    #[error("unknown tier {0:?} (expected smoke or full)")]
    UnknownTier(String),
    #[error("unknown property check {0:?}")]
    UnknownCheck(String),
}

impl LabError {
    pub fn runner(context: &str, err: impl std::fmt::Display) -> Self {
        LabError::Runner { context: context.to_string(), message: err.to_string() }
    }
}
