use std::path::PathBuf;

/// Errors produced anywhere in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("point {point} lies outside the source domain [{lo}, {hi}]")]
    OutOfDomain { point: f64, lo: f64, hi: f64 },

    #[error("numeric failure: {reason} (row {row})")]
    NumericFailure { reason: String, row: usize },

    #[error("shape error in `{primitive}`: {detail}")]
    Shape { primitive: &'static str, detail: String },

    #[error("non-finite value produced by node {node} ({primitive})")]
    Overflow { node: String, primitive: &'static str },

    #[error("graph state error: {0}")]
    State(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("sample {index} has a zero-norm target")]
    DegenerateSample { index: usize },

    #[error("training diverged at epoch {epoch}: {reason}")]
    Diverged {
        epoch: usize,
        reason: String,
        /// Epoch losses recorded before the failure.
        history: Vec<f64>,
    },

    #[error("dataset generation failed at sample {index}: {source}")]
    Generation {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("corrupted file: {0}")]
    Corruption(String),

    #[error("missing artifact {path}: run the `{stage}` stage first")]
    StageDependency { stage: &'static str, path: PathBuf },

    #[error("config validation failed: {0}")]
    Validation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
