use thiserror::Error;

use crate::network::ParseError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("mode {mode} out of range for a {n_modes}-mode system")]
    ModeOutOfRange { mode: usize, n_modes: usize },

    #[error("beam splitter needs two distinct modes, got {0} twice")]
    EqualModes(usize),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("covariance matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("state violates the uncertainty principle (min eigenvalue {0:e})")]
    Unphysical(f64),

    #[error("noise matrix is not positive semidefinite (min eigenvalue {0:e})")]
    NoiseNotPsd(f64),

    #[error("quadrature combination has no nonzero coefficient")]
    ZeroForm,

    #[error("variance is not convex in the gain (curvature {0:e})")]
    NonConvex(f64),

    #[error("criterion pair must combine one X-only and one Y-only form")]
    AxesNotConjugate,

    #[error("no phase convention reproduces the closed-form variances")]
    NoConventionFound,

    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error("invalid dataset: {0}")]
    Dataset(String),

    #[error("fit did not converge: {0}")]
    NonConvergence(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Rejects NaN and values outside `[lo, hi]`.
pub(crate) fn check_range(name: &'static str, value: f64, lo: f64, hi: f64) -> Result<f64> {
    if !value.is_finite() {
        return Err(Error::InvalidParameter {
            name,
            value,
            reason: "must be finite",
        });
    }
    if value < lo || value > hi {
        return Err(Error::InvalidParameter {
            name,
            value,
            reason: "outside the allowed range",
        });
    }
    Ok(value)
}
