use std::path::PathBuf;

use thiserror::Error;

use crate::types::{Method, Position};

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite entry {value} at ({row}, {col})")]
    NonFinite { row: usize, col: usize, value: f64 },

    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("vocabulary size must be at least 2, got {0}")]
    VocabTooSmall(usize),

    #[error("invalid vocabulary: {0}")]
    InvalidVocabulary(String),

    #[error("target and context position are both {0}")]
    SamePosition(Position),

    #[error("row {row} of the {what} sums to {sum}, expected 1")]
    RowSum {
        what: &'static str,
        row: usize,
        sum: f64,
    },

    #[error("conditioning token {token} at position {position} has no mass in the joint")]
    DegenerateConditioning { position: Position, token: usize },

    #[error("logits channel requested but {0} table carries none")]
    MissingLogits(&'static str),

    #[error("pivot ({0}, {1}) out of range for vocabulary size {2}")]
    PivotOutOfRange(usize, usize, usize),

    #[error("non-finite value in the iterate at iteration {iteration}")]
    IterationNonFinite { iteration: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("tolerance must be a non-negative number, got {0}")]
    InvalidTolerance(f64),

    #[error("token id {token} out of range for vocabulary size {vocab_size}")]
    TokenOutOfRange { token: usize, vocab_size: usize },

    #[error("invalid record {example_id}: {reason}")]
    InvalidRecord { example_id: String, reason: String },

    #[error("original unaries can only be used with the mlm method, not {0}")]
    MethodFlagMismatch(Method),

    #[error("cannot aggregate an empty list of scores")]
    EmptyScores,

    #[error("scores mix methods {0} and {1}")]
    MixedMethods(Method, Method),

    #[error("example {0} has no syntactic distance")]
    MissingSyntacticDistance(String),

    #[error("unknown method '{0}'")]
    UnknownMethod(String),

    #[error("bad magic {found:?}, expected {expected:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),

    #[error("malformed file: {0}")]
    Format(String),

    #[error("record {index} ({example_id}): row {row} of {table} sums to {sum}")]
    RecordRowSum {
        index: usize,
        example_id: String,
        table: &'static str,
        row: usize,
        sum: f64,
    },

    #[error("{path}:{line}: {message}")]
    Manifest {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("missing joints for method {method} in {path}")]
    MissingJoints { method: Method, path: PathBuf },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. }
                | Error::DegenerateConditioning { .. }
                | Error::IterationNonFinite { .. }
        )
    }
}
