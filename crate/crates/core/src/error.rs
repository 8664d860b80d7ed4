use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error in {context} at line {line}, column {column}: {message}")]
    Parse {
        context: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invariant violation: {0}")]
    InvariantViolation(String),
    #[error("scene generation failed: {0}")]
    GenerationFailure(String),
    #[error("insufficient categories: need {need}, scene has {have}")]
    InsufficientCategories { need: usize, have: usize },
    #[error("insufficient spawn cells: need {need}, scene has {have}")]
    InsufficientSpawns { need: usize, have: usize },
    #[error("invalid pose: {0}")]
    InvalidPose(String),
    #[error("position out of map bounds: ({x}, {y})")]
    OutOfBounds { x: i32, y: i32 },
    #[error("dimension mismatch: {0}")]
    DimsMismatch(String),
    #[error("goal set is empty")]
    EmptyGoalSet,
    #[error("unknown category: {0}")]
    UnknownCategory(String),
    #[error("edge weight {0} outside [0, 1]")]
    WeightOutOfRange(f64),
    #[error("scene list is empty")]
    EmptySceneList,
    #[error("payload has length {got}, expected {expected}")]
    BadLength { expected: usize, got: usize },
    #[error("need at least {need} training maps, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("no sub-goal candidate")]
    NoCandidate,
    #[error("agent cell is marked as an obstacle in its own map")]
    AgentCellOccupied,
    #[error("training diverged: {0}")]
    Divergence(String),
    #[error("oracle instance too large: {0}")]
    InstanceTooLarge(String),
    #[error("empty input")]
    EmptyInput,
    #[error("episode result for task {0} has no oracle makespan")]
    MissingOracle(String),
    #[error("task {0} has no paired single-agent result")]
    UnpairedTask(String),
    #[error("inconsistent configuration: {0}")]
    ConfigInconsistency(String),
    #[error("invalid value for `{field}`: {message}")]
    Validation { field: String, message: String },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("bad replay record: {0}")]
    BadRecord(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn json(context: &str, err: &serde_json::Error) -> Self {
        Error::Parse {
            context: context.to_string(),
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }

    pub(crate) fn validation(field: &str, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.to_string(),
            message: message.into(),
        }
    }

    /// True for errors caused by bad user input rather than a failed run.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::InvariantViolation(_)
                | Error::UnknownCategory(_)
                | Error::WeightOutOfRange(_)
                | Error::Validation { .. }
                | Error::ConfigInconsistency(_)
                | Error::InsufficientCategories { .. }
                | Error::InsufficientSpawns { .. }
        )
    }
}
