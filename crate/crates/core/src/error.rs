use thiserror::Error;

/// Errors raised by model fitting, inference, generation and metrics.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum SrmrError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("empty data: {0}")]
    EmptyData(String),

    #[error("insufficient data: need at least {needed} rows, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("trim too aggressive: h = {h} but at least {needed} rows must be kept")]
    TrimTooAggressive { h: usize, needed: usize },

    #[error("exhaustive search refused for n = {n} (limit {limit})")]
    TooLargeForExhaustive { n: usize, limit: usize },

    #[error("every row is an outlier; the trimmed likelihood is empty")]
    EmptyLikelihood,

    #[error("infeasible K = {k}: need at least {needed} rows, got {n}")]
    InfeasibleK { k: usize, n: usize, needed: usize },

    #[error("fit failed on all {starts} starts: {diagnostics}")]
    FitFailed { starts: usize, diagnostics: String },

    #[error("no outliers supplied; the bootstrap test is undefined")]
    NoOutliers,

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("generation stuck after {proposals} rejected proposals")]
    GenerationStuck { proposals: usize },

    #[error("unknown scenario '{name}'; valid names: {valid}")]
    UnknownScenario { name: String, valid: String },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for SrmrError {
    fn from(e: std::io::Error) -> Self {
        SrmrError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, SrmrError>;
