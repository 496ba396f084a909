use std::path::PathBuf;

/// Process exit code for successful runs.
pub const EXIT_OK: i32 = 0;
/// Exit code for malformed input, invalid parameters and unwritable outputs.
pub const EXIT_VALIDATION: i32 = 2;
/// Exit code for numeric failures (non-convergence, overflow).
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] dpmmdp_core::Error),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    /// The process exit code this error maps to.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Core(dpmmdp_core::Error::Numeric(_)) => EXIT_NUMERIC,
            _ => EXIT_VALIDATION,
        }
    }
}
