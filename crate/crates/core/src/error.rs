use std::path::PathBuf;

use thiserror::Error;

use crate::domain::{MetricKind, ValidationReport};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch for {what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        actual: usize,
    },

    #[error("{id} is missing metric {metric}")]
    MissingMetric { id: String, metric: MetricKind },

    #[error("undefined input: {0}")]
    Undefined(String),

    #[error("candidate sets differ: {0}")]
    CandidateMismatch(String),

    #[error("weights do not match the supplied voters: {0}")]
    WeightMismatch(String),

    #[error("sensor `{sensor}` read failed: {message}")]
    Sensor { sensor: &'static str, message: String },

    #[error("workload failed at batch {batch}: {message}")]
    Workload { batch: u32, message: String },

    #[error("unknown {kind} id `{id}`")]
    UnknownId { kind: &'static str, id: String },

    #[error("training diverged at epoch {epoch} with lr {lr}: {detail}")]
    Diverged { epoch: usize, lr: f64, detail: String },

    #[error("scorer is not usable here: {0}")]
    Scorer(String),

    #[error("parse error in {path} at line {line}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("validation failed:\n{0}")]
    Validation(ValidationReport),

    #[error("store at {0} is locked by another writer")]
    Locked(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn dims(what: impl Into<String>, expected: usize, actual: usize) -> Self {
        Error::DimensionMismatch {
            what: what.into(),
            expected,
            actual,
        }
    }
}
