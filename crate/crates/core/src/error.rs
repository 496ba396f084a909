use alloc::string::String;

/// Errors produced by model construction, the privacy mechanisms and the solvers.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("index error: {0}")]
    Index(String),
    #[error("model error: {0}")]
    Model(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("shape error: expected {expected}, found {found}")]
    Shape { expected: usize, found: usize },
    #[error("capacity error: {what} needs {needed} entries, limit is {limit}")]
    Capacity {
        what: &'static str,
        needed: u128,
        limit: u128,
    },
    #[error("degenerate model: {0}")]
    Degenerate(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
}

pub type Result<T> = core::result::Result<T, Error>;
