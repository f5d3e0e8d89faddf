use std::fmt;

use srmr_core::SrmrError;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const IO: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const INFEASIBLE: i32 = 3;
    pub const INPUT_MISMATCH: i32 = 4;
    pub const FIT_FAILED: i32 = 5;
}

/// A command failure carrying its exit code.
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(exit::CONFIG, message)
    }

    pub fn mismatch(message: impl Into<String>) -> Self {
        Self::new(exit::INPUT_MISMATCH, message)
    }

    pub fn with_context(mut self, context: &str) -> Self {
        self.message = format!("{context}: {}", self.message);
        self
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        Self::new(exit::IO, format!("{}: {e}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<SrmrError> for CliError {
    fn from(e: SrmrError) -> Self {
        let code = match &e {
            SrmrError::InvalidParameter(_)
            | SrmrError::UnknownScenario { .. }
            | SrmrError::TrimTooAggressive { .. }
            | SrmrError::TooLargeForExhaustive { .. }
            | SrmrError::GenerationStuck { .. } => exit::CONFIG,
            SrmrError::InfeasibleK { .. } | SrmrError::InsufficientData { .. } => exit::INFEASIBLE,
            SrmrError::DimensionMismatch(_)
            | SrmrError::InvalidDataset(_)
            | SrmrError::EmptyData(_)
            | SrmrError::Parse { .. }
            | SrmrError::EmptyLikelihood
            | SrmrError::NoOutliers
            | SrmrError::UndefinedMetric(_) => exit::INPUT_MISMATCH,
            SrmrError::FitFailed { .. } => exit::FIT_FAILED,
            SrmrError::Io(_) => exit::IO,
        };
        CliError::new(code, e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
