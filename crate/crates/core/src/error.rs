use thiserror::Error;

/// Errors raised by the scorecard pipeline.
///
/// `Validation` covers bad inputs (malformed files, contract violations);
/// everything else is a failure while computing on otherwise valid data.
#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("row {row}, column '{column}': {message}")]
    Cell {
        row: usize,
        column: String,
        message: String,
    },

    #[error("model fit failed: {0}")]
    Fit(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("not implemented: {0}")]
    Unimplemented(String),
}

impl ScoreError {
    pub fn validation(msg: impl Into<String>) -> Self {
        ScoreError::Validation(msg.into())
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        ScoreError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// True for errors caused by invalid user input rather than computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            ScoreError::Validation(_)
                | ScoreError::Cell { .. }
                | ScoreError::Csv(_)
                | ScoreError::Json(_)
                | ScoreError::Io { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, ScoreError>;
