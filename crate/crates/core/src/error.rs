use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised anywhere in the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("row {row} has zero norm")]
    ZeroNormRow { row: usize },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("embedding set `{0}` has no valid positions")]
    EmptySet(String),

    #[error("no candidates left after excluding the query")]
    EmptyDatabase,

    #[error("invalid value: {0}")]
    Invalid(String),

    #[error("row {row} of `{id}` is not unit-norm (norm = {norm})")]
    NotUnitNorm { id: String, row: usize, norm: f64 },

    #[error("bad magic bytes: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),

    #[error("file truncated while reading {0}")]
    Truncated(&'static str),

    #[error("{0} trailing bytes after the last record")]
    TrailingData(usize),

    #[error("duplicate protein id `{0}`")]
    DuplicateId(String),

    #[error("unknown protein id `{0}`")]
    UnknownId(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("no label for protein `{0}`")]
    MissingLabel(String),

    #[error("sequence of length {len} is shorter than k = {k}")]
    TooShort { len: usize, k: usize },

    #[error("minhash signatures were built with different schemes")]
    SchemeMismatch,

    #[error("query has no relevant proteins in the database")]
    NoRelevant,

    #[error("need at least 2 groups to split, found {0}")]
    TooFewGroups(usize),

    #[error("need at least {need} training pairs with batch size >= 2, got {got}")]
    InsufficientPairs { need: usize, got: usize },

    #[error("non-finite loss or gradient at training step {step}")]
    TrainingDiverged { step: usize },

    #[error("query `{query}`: {source}")]
    Query {
        query: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether the error stems from bad input data rather than bad arguments.
    pub fn is_data_error(&self) -> bool {
        !matches!(
            self,
            Error::Invalid(_) | Error::InsufficientPairs { .. } | Error::TooFewGroups(_)
        )
    }
}
