use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, SdtError>;

#[derive(Debug, Error)]
pub enum SdtError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}:{line}: parse error: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}:{line}: invalid row: {message}")]
    Validation {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("degenerate evidence support: {0}")]
    DegenerateSupport(String),

    #[error("insufficient class data: {0}")]
    InsufficientClass(String),

    #[error("need at least {needed} usable ROC points, found {found}")]
    InsufficientPoints { needed: usize, found: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("model fit failed: {0}")]
    FitFailure(String),

    #[error("value outside the function domain: {0}")]
    Domain(String),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("bootstrap failed: only {converged} of {total} resamples converged")]
    BootstrapFailure { converged: usize, total: usize },

    #[error("mismatched inputs: {0}")]
    Mismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl SdtError {
    /// Errors caused by the configuration or the shape of the input files,
    /// as opposed to failures of the analysis itself.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            SdtError::Config(_)
                | SdtError::Parse { .. }
                | SdtError::Validation { .. }
                | SdtError::Schema(_)
                | SdtError::Json(_)
                | SdtError::Csv(_)
        )
    }
}
