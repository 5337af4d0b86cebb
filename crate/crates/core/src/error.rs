use thiserror::Error;

use crate::integrator::Trajectory;
use crate::model::OccupancyState;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Inconsistent or invalid configuration (dimensions, rates, tolerances).
    #[error("configuration error: {0}")]
    Config(String),

    /// Input outside the domain where an operation is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// The integrator could not continue; carries everything computed so far.
    #[error("integration failed at t = {time}: {reason}")]
    Integration {
        time: f64,
        reason: String,
        partial: Option<Box<Trajectory>>,
    },

    /// The horizon ran out before the vector field settled.
    #[error("no equilibrium within t = {elapsed}: field sup-norm still {field_norm:e}")]
    Timeout {
        best: OccupancyState,
        elapsed: f64,
        field_norm: f64,
    },

    #[error("numerical failure: {message} (residual {residual:e})")]
    Numerical { message: String, residual: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// True for errors caused by bad input rather than by the numerics.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Domain(_))
    }
}
