use thiserror::Error;

use crate::basis::Basis;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("Hilbert-space dimension {dim} exceeds the configured guard {guard}")]
    DimensionGuard { dim: usize, guard: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("operator is not Hermitian: max |M - M^dag| = {deviation:e} (allowed {allowed:e})")]
    NotHermitian { deviation: f64, allowed: f64 },

    #[error("eigensolver did not converge (residual {residual:e})")]
    EigenNonConvergence { residual: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("energy {target} lies outside the open spectral interval ({min}, {max})")]
    UnattainableEnergy { target: f64, min: f64, max: f64 },

    #[error("inverse-temperature search did not converge: {0}")]
    BetaNonConvergence(String),

    #[error("distribution has zero variance")]
    DegenerateDistribution,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("expected a {expected:?}-basis object")]
    BasisMismatch { expected: Basis },

    #[error("window partition was not built from this spectrum")]
    PartitionMismatch,

    #[error("window grid misaligned: {0}")]
    Misaligned(String),

    #[error("regions are not related by a lattice translation")]
    NotCongruent,

    #[error("bound violated: {0}")]
    BoundViolated(String),
}

pub type Result<T> = std::result::Result<T, Error>;
