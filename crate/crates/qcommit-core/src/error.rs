use thiserror::Error;

/// Errors produced by state construction and reduction accounting.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension cap exceeded: {what} needs {entries} dense entries (cap {cap})")]
    DimensionCap {
        what: String,
        entries: u128,
        cap: usize,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("register layout error: {0}")]
    Layout(String),

    #[error("invalid value: {0}")]
    Validity(String),

    #[error("numeric failure: {0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, Error>;
