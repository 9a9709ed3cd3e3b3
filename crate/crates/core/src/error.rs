use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A malformed input file. `line` is 1-based.
    #[error("{msg}, line {line}")]
    Parse { line: usize, msg: String },

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("source matrix is rank deficient ({rank} < {dim}); least squares has no unique solution, use procrustes instead")]
    Singular { rank: usize, dim: usize },

    #[error("map is not orthogonal (max |QᵀQ - I| = {deviation:e}); classifier scores would not be preserved")]
    NonOrthogonal { deviation: f64 },

    #[error("label sets differ: {0}")]
    LabelMismatch(String),

    #[error("unknown gold label '{0}'")]
    UnknownLabel(String),

    #[error("k = {k} exceeds pool size {pool}")]
    KTooLarge { k: usize, pool: usize },

    #[error("the two models share no vocabulary")]
    EmptyIntersection,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl Error {
    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
