use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Stable process exit codes, one per failure family.
pub mod exit_code {
    pub const OK: i32 = 0;
    pub const INVALID_CONFIG: i32 = 2;
    pub const PARSE: i32 = 3;
    pub const MEMORY_BUDGET_EXCEEDED: i32 = 4;
    pub const PRECONDITION_REFUSED: i32 = 5;
    pub const IO: i32 = 6;
    pub const UNDEFINED_SIMILARITY: i32 = 7;
    pub const SWEEP_MISMATCH: i32 = 8;
    pub const INTERNAL: i32 = 70;
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("self-pair: multiset `{0}` cannot be paired with itself")]
    SelfPair(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: non-positive multiplicity {value}")]
    NonPositiveMultiplicity { line: usize, value: i128 },

    #[error("undefined similarity: {0}")]
    UndefinedSimilarity(String),

    #[error("memory budget exceeded: {what} needs {needed} bytes, budget is {budget} bytes")]
    MemoryBudgetExceeded {
        what: String,
        needed: u64,
        budget: u64,
    },

    #[error("precondition refused: {0}")]
    PreconditionRefused(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("kernel contract violation: {0}")]
    Contract(String),

    #[error("record decode error: {0}")]
    Decode(String),

    #[error("internal inconsistency: {0}")]
    Internal(String),

    #[error("sweep mismatch: {0}")]
    SweepMismatch(String),

    #[error("stage `{stage}` failed on key {key}: {source}")]
    Task {
        stage: String,
        key: String,
        #[source]
        source: Box<Error>,
    },

    #[error("chain stage {index}: {source}")]
    Chain {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// The innermost error, looking through stage and chain wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Task { source, .. } | Error::Chain { source, .. } => source.root(),
            other => other,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.root() {
            Error::InvalidConfig(_) | Error::InvalidMeasure(_) => exit_code::INVALID_CONFIG,
            Error::Parse { .. } | Error::NonPositiveMultiplicity { .. } => exit_code::PARSE,
            Error::MemoryBudgetExceeded { .. } => exit_code::MEMORY_BUDGET_EXCEEDED,
            Error::PreconditionRefused(_) => exit_code::PRECONDITION_REFUSED,
            Error::Io(_) => exit_code::IO,
            Error::UndefinedSimilarity(_) => exit_code::UNDEFINED_SIMILARITY,
            Error::SweepMismatch(_) => exit_code::SWEEP_MISMATCH,
            _ => exit_code::INTERNAL,
        }
    }

    pub fn is_memory_budget_exceeded(&self) -> bool {
        matches!(self.root(), Error::MemoryBudgetExceeded { .. })
    }

    pub(crate) fn decode(msg: impl Into<String>) -> Self {
        Error::Decode(msg.into())
    }
}
