use thiserror::Error;

/// Errors returned by this crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A composition component was zero, negative, or non-finite.
    #[error("component {index} is not strictly positive (value {value})")]
    Domain { index: usize, value: f64 },
    /// Values did not form a valid composition.
    #[error("invalid composition: {0}")]
    InvalidComposition(String),
    /// A caller violated an operation's precondition.
    #[error("usage error: {0}")]
    Usage(String),
    /// A configuration document or model specification is inconsistent.
    #[error("configuration error: {0}")]
    Config(String),
    /// Input data could not be ingested.
    #[error("data error at row {row}: {message}")]
    Data { row: usize, message: String },
    /// A log density or gradient evaluated to a non-finite number.
    #[error("non-finite value in {term}")]
    NonFinite { term: String },
    /// A simulated trajectory left the region `|eta| <= bound`.
    #[error("trajectory exploded at step {step} (|eta| > {bound})")]
    Explosive { step: usize, bound: f64 },
    /// An iterative numerical method failed.
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
