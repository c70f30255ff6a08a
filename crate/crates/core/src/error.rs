//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by filter operations and supporting numerics.
#[derive(Debug, Error)]
pub enum SlatError {
    /// A caller violated an operation contract (dimension mismatch, empty
    /// mixture, invalid probability, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A numerical quantity degenerated (singular or ill-conditioned
    /// innovation covariance, non-PSD covariance). `context` names the
    /// offending component.
    #[error("numerical degeneracy in {context}: {detail}")]
    Degenerate { context: String, detail: String },

    /// Lookup of a vehicle id that is not part of the state.
    #[error("unknown vehicle id {0}")]
    UnknownVehicle(u32),

    /// Exact association enumeration was requested on an instance beyond the
    /// factorial guard.
    #[error(
        "association problem too large for exact enumeration \
         (n={n}, m={m}, guard={guard}); use the belief-propagation solver"
    )]
    ExactGuard { n: usize, m: usize, guard: usize },
}

pub type Result<T> = std::result::Result<T, SlatError>;

impl SlatError {
    pub fn contract(msg: impl Into<String>) -> Self {
        SlatError::Contract(msg.into())
    }

    pub fn degenerate(context: impl Into<String>, detail: impl Into<String>) -> Self {
        SlatError::Degenerate {
            context: context.into(),
            detail: detail.into(),
        }
    }
}
