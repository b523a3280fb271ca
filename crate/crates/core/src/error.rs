use std::fmt;

/// Shape of a matrix-like operand, rendered as `rows×cols` in error messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape(pub usize, pub usize);

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.0, self.1)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left} vs {right}")]
    DimensionMismatch {
        op: &'static str,
        left: Shape,
        right: Shape,
    },

    #[error("invalid mask: no category is masked in")]
    InvalidMask,

    #[error("invalid target {target}: {reason}")]
    InvalidTarget { target: usize, reason: String },

    #[error("{what} out of range: {value} (limit {limit})")]
    OutOfRange {
        what: &'static str,
        value: f64,
        limit: f64,
    },

    #[error("vocabulary is empty after pruning")]
    EmptyVocab,

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid query: {0}")]
    InvalidQuery(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("incompatible checkpoint: {0}")]
    Incompatible(String),

    #[error("reports cannot be compared: {0}")]
    Comparison(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_err(op: &'static str, left: (usize, usize), right: (usize, usize)) -> Error {
    Error::DimensionMismatch {
        op,
        left: Shape(left.0, left.1),
        right: Shape(right.0, right.1),
    }
}
