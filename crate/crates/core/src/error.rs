use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),
    #[error("incompatible operands: {0}")]
    Incompatible(String),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("similarity undefined for a zero-norm operand")]
    ZeroNorm,
    #[error("unsupported representation: {0}")]
    UnsupportedRepr(String),
    #[error("non-finite input component at index {index}")]
    NonFinite { index: usize },
    #[error("numeric overflow in {stage} at index {index}")]
    Overflow { stage: &'static str, index: usize },
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("invalid ensemble: {0}")]
    InvalidEnsemble(String),
    #[error("optimization diverged at step {step} (objective {value})")]
    Divergence { step: usize, value: f64 },
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("malformed encoding: {0}")]
    Decode(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}:{line}: {reason}", path.display())]
    Parse { path: PathBuf, line: usize, reason: String },
    #[error("{}: {reason}", path.display())]
    Format { path: PathBuf, reason: String },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }

    /// True for failures caused by input files rather than by configuration or numerics.
    pub fn is_data(&self) -> bool {
        matches!(
            self,
            Error::Io { .. } | Error::Parse { .. } | Error::Format { .. } | Error::InvalidDataset(_)
        )
    }
}
