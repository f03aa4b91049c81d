//! Crate-wide error type.

use std::fmt;

/// Errors raised anywhere in the planning/realization pipeline.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Tensor shapes incompatible for the attempted operation.
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    /// A softmax row where every entry is masked out.
    FullyMaskedRow { row: usize },
    /// Backward pass requested on a non-scalar value.
    NonScalarLoss { shape: Vec<usize> },
    /// Gradient check misuse or failure.
    GradCheck(String),
    /// Optimizer state inconsistent with the parameter set.
    Optim(String),
    /// Corpus file problems, with the 1-based line number when known.
    Corpus { line: Option<usize>, msg: String },
    /// Vocabulary construction misuse.
    Vocab(String),
    /// Configuration file or value problems.
    Config(String),
    /// Checkpoint serialization problems, naming the parameter when known.
    Checkpoint(String),
    /// Model assembly or decoding misuse.
    Model(String),
    /// Underlying I/O failure.
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch { op, lhs, rhs } => {
                write!(f, "{op}: shape mismatch {lhs:?} vs {rhs:?}")
            }
            Error::FullyMaskedRow { row } => {
                write!(f, "softmax: row {row} has every entry masked")
            }
            Error::NonScalarLoss { shape } => {
                write!(f, "backward: loss must be scalar, got shape {shape:?}")
            }
            Error::GradCheck(msg) => write!(f, "gradient check: {msg}"),
            Error::Optim(msg) => write!(f, "optimizer: {msg}"),
            Error::Corpus { line: Some(n), msg } => write!(f, "corpus line {n}: {msg}"),
            Error::Corpus { line: None, msg } => write!(f, "corpus: {msg}"),
            Error::Vocab(msg) => write!(f, "vocabulary: {msg}"),
            Error::Config(msg) => write!(f, "config: {msg}"),
            Error::Checkpoint(msg) => write!(f, "checkpoint: {msg}"),
            Error::Model(msg) => write!(f, "model: {msg}"),
            Error::Io(msg) => write!(f, "io: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
