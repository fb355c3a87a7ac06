use thiserror::Error;

/// Errors raised by the dmdgen library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{kind} decomposition failed for a {rows}x{cols} matrix")]
    Decomposition {
        kind: &'static str,
        rows: usize,
        cols: usize,
    },

    #[error("series `{0}` has a rank-0 decomposition and carries no temporal modes")]
    EmptyModes(String),

    #[error("batch {batch} has no usable series on the {side} side (all degenerate)")]
    DegenerateBatch { batch: usize, side: &'static str },

    #[error("transport problem is infeasible: {0}")]
    Infeasible(String),

    #[error("exact solver is capped at {cap}x{cap}, got {rows}x{cols}; use the sinkhorn solver")]
    ProblemTooLarge { rows: usize, cols: usize, cap: usize },

    #[error("cost for pair ({row}, {col}) failed: {source}")]
    Pair {
        row: String,
        col: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Ingest(#[from] IngestError),
}

/// Errors from loading or writing series files.
#[derive(Debug, Error)]
pub enum IngestError {
    #[error("file not found: {0}")]
    Missing(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("ragged row {row}: expected {expected} fields, found {found}")]
    Ragged { row: usize, expected: usize, found: usize },

    #[error("non-numeric cell {value:?} at row {row}, column {col}")]
    Parse { row: usize, col: usize, value: String },

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("series too short: {rows} rows, window length {length}")]
    TooShort { rows: usize, length: usize },

    #[error("malformed file: {0}")]
    Malformed(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
