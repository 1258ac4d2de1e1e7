use thiserror::Error;

/// Errors produced by training, prediction, simulation, and persistence.
#[derive(Debug, Error)]
pub enum Error {
    /// The caller handed in data or parameters that violate a documented
    /// precondition (dimension mismatch, empty input, invalid constant, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A symmetric positive-definite factorization failed even after jitter
    /// escalation. Carries no location; the trainer wraps it into
    /// [`Error::Numerical`] with sweep and model indices.
    #[error("matrix factorization failed: {0}")]
    Factorization(String),

    /// Training hit a non-recoverable numerical problem (failed factorization
    /// or non-finite values) at a known sweep and local-model index.
    #[error("numerical failure at sweep {sweep}, local model {model}: {detail}")]
    Numerical {
        sweep: usize,
        model: usize,
        detail: String,
    },

    /// A dataset cell or structural element could not be parsed.
    #[error("parse error in {path} at line {line}: {detail}")]
    Parse {
        path: String,
        line: usize,
        detail: String,
    },

    /// The dataset's role annotations are missing or inconsistent.
    #[error("schema error in {path}: {detail}")]
    Schema { path: String, detail: String },

    /// A model file is malformed, truncated, has a bad checksum, or was
    /// written by an incompatible format version.
    #[error("model file error: {0}")]
    ModelFormat(String),

    /// A response with zero population variance has no defined nMSE.
    #[error("{context} has zero variance: nMSE is undefined, use the MSE metric instead")]
    ZeroVariance { context: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
