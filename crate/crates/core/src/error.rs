use std::time::Duration;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("cannot produce connected graph: n={n}, p={p} after {attempts} attempts")]
    NotConnected { n: usize, p: f64, attempts: usize },

    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),

    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("division by near-zero denominator in {0}")]
    DivByZero(&'static str),

    #[error("index out of range in {op}: {index} >= {bound}")]
    OutOfRange {
        op: &'static str,
        index: usize,
        bound: usize,
    },

    #[error("empty segment {0} in segment reduction")]
    EmptySegment(usize),

    #[error("exact-solve budget exceeded: {0}")]
    BudgetExceeded(String),

    #[error("oracle timed out after {0:?}")]
    Timeout(Duration),

    #[error("inconsistent input: {0}")]
    Inconsistent(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("config error: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }
}
