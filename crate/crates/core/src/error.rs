//! Error type shared across the library.

use thiserror::Error;

/// Errors surfaced by calibration, fitting, and solving routines.
#[derive(Debug, Error)]
pub enum BciError {
    /// A parameter is outside its documented domain.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// A buffer or candidate set that must be populated is empty.
    #[error("{0} is empty; not ready")]
    NotReady(&'static str),

    /// A series is too short for the requested operation.
    #[error("insufficient data: need at least {needed} points, have {have}")]
    InsufficientData { needed: usize, have: usize },

    /// An internal invariant failed; `step` is the offending row index.
    #[error("invariant violation at step {step}: {detail}")]
    Invariant { step: usize, detail: String },

    /// The brute-force oracle was asked for an instance beyond its guard.
    #[error("oracle guard exceeded: {0}")]
    GuardExceeded(String),
}

impl BciError {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        BciError::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, BciError>;
