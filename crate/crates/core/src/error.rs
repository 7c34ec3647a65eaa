//! Error types shared across the library.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("factorization residual {residual:.3e} exceeds tolerance {tolerance:.1e} at entry ({row}, {col})")]
    ResidualTooLarge {
        row: usize,
        col: usize,
        residual: f64,
        tolerance: f64,
    },

    #[error("noise channel for learner {learner_id} exhausted after {steps} steps")]
    ChannelExhausted { learner_id: u64, steps: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite gradient for learner {learner_id} at round {round}, step {step}")]
    NonFiniteGradient {
        learner_id: u64,
        round: usize,
        step: usize,
    },

    #[error("sample count mismatch for learner {learner_id}: expected {expected}, got {got}")]
    SampleCountMismatch {
        learner_id: u64,
        expected: usize,
        got: usize,
    },

    #[error("missing retained data for round {round}")]
    MissingRoundData { round: usize },

    #[error("operation requires {expected} samples, stream holds {got}")]
    StreamExhausted { expected: usize, got: usize },

    #[error("unsupported loss kind: {0}")]
    UnsupportedLossKind(&'static str),

    #[error("diagnostics violation ({check}) at round {round}: residual {residual:.3e} exceeds {tolerance:.1e}")]
    DiagnosticsViolation {
        check: &'static str,
        round: usize,
        residual: f64,
        tolerance: f64,
    },
}

impl Error {
    pub fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
