use thiserror::Error;

/// Errors raised across the detection pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum AndriError {
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("bad parameter: {0}")]
    BadParam(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("clusters overlap at member {0}")]
    OverlapError(usize),
    #[error("invalid dendrogram level {0}")]
    InvalidLevel(usize),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("non-finite input at position {0}")]
    NonFiniteInput(usize),
    #[error("model has no patterns")]
    NoPatterns,
    #[error("format error: {0}")]
    FormatError(String),
    #[error("infeasible injection: {0}")]
    Infeasible(String),
    #[error("metric undefined: {0}")]
    UndefinedMetric(String),
    #[error("manifest error: {0}")]
    ManifestError(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for AndriError {
    fn from(e: std::io::Error) -> Self {
        AndriError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, AndriError>;
