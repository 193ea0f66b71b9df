//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("missing column `{0}` in header")]
    MissingColumn(String),

    #[error("no valid rows for target symbol `{0}`")]
    NoRowsForTarget(String),

    #[error("unknown symbol `{0}`")]
    UnknownSymbol(String),

    #[error("series `{symbol}` has {len} bars, need at least {needed}")]
    SeriesTooShort { symbol: String, len: usize, needed: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-positive price {0} encountered")]
    NonPositivePrice(f64),

    #[error("alignment failed: {0}")]
    Alignment(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("matrix rank {rank} is below the required {required}")]
    RankDeficient { rank: usize, required: usize },

    #[error("insufficient symbols: requested {requested}, only {available} available")]
    InsufficientSymbols { requested: usize, available: usize },

    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
