//! Error type shared across the crate.

use thiserror::Error;

/// Crate-wide error enum. Variants map onto the failure classes of the
/// public operations: shape checks, API contracts, configuration parsing,
/// numeric blow-ups, and on-disk format problems.
#[derive(Debug, Error)]
pub enum Error {
    /// An input had the wrong dimensions for the operation.
    #[error("input shape error: {0}")]
    Shape(String),

    /// A caller violated an API contract (e.g. backward on a non-scalar).
    #[error("contract error: {0}")]
    Contract(String),

    /// Invalid configuration: bad key, bad value, incompatible options.
    #[error("configuration error: {0}")]
    Config(String),

    /// Non-finite values where finite ones are required.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A serialized artifact failed validation (magic, version, truncation).
    #[error("format error: {0}")]
    Format(String),

    /// Training produced a non-finite loss; names the step and the loss.
    #[error("training aborted at step {step}: {loss_name} is not finite ({value})")]
    LossDiverged {
        step: u64,
        loss_name: &'static str,
        value: f64,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
