use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("domain mismatch between operands")]
    DomainMismatch,

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("CFL violation: dt = {dt:e} exceeds limit {limit:e}")]
    Cfl { dt: f64, limit: f64 },

    #[error("blow-up at t = {t}: {detail}")]
    BlowUp { t: f64, detail: String },

    #[error("smallness violated: {0}")]
    Smallness(String),

    #[error("invariant violated: {what} (magnitude {magnitude:e} at {location})")]
    Invariant {
        what: String,
        location: String,
        magnitude: f64,
    },

    #[error("unbounded ratio: {0}")]
    Unbounded(String),

    #[error("decay requires mu > 0")]
    DecayRequiresViscosity,

    #[error("saturated: {0}")]
    Saturated(String),

    #[error("container: {0}")]
    Container(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invariant(what: impl Into<String>, location: impl Into<String>, magnitude: f64) -> Self {
        Error::Invariant {
            what: what.into(),
            location: location.into(),
            magnitude,
        }
    }
}
