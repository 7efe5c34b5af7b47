//! Error type shared across the library.

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("degenerate trace: {0}")]
    DegenerateTrace(&'static str),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("projection index {index} out of range for state dimension {dim}")]
    ProjectionIndex { index: usize, dim: usize },

    #[error("point outside objective bounds in dimension {dim}")]
    OutOfBounds { dim: usize },

    #[error("sampling exhausted after {attempts} attempts")]
    SamplingExhausted { attempts: usize },

    #[error("invalid region: {0}")]
    InvalidRegion(String),

    #[error("empty data: {0}")]
    EmptyData(&'static str),

    #[error("underdetermined fit: {pairs} snapshot pairs for {unknowns} unknowns")]
    UnderdeterminedFit { pairs: usize, unknowns: usize },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("insufficient data: have {have}, need {need}")]
    InsufficientData { have: usize, need: usize },

    #[error("inconsistent traces: {0}")]
    InconsistentTraces(&'static str),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("plant step {step} failed: {source}")]
    PlantStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
