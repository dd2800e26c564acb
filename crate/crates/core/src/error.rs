//! Error type shared by every solver layer.

use thiserror::Error;

use crate::trace::SolveTrace;

/// Best point reached before a safeguard cap tripped.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PartialSolution {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Last certificate residual available at the cap (may be `INFINITY`
    /// when no termination test completed).
    pub residual: f64,
    /// Outer iterations completed by the layer that hit the cap.
    pub iterations: usize,
    /// Trace rows recorded before the cap (filled by the outer ALM layer).
    pub trace: SolveTrace,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("{layer}: iteration limit exceeded after {} iterations (residual {})", .best.iterations, .best.residual)]
    IterationLimitExceeded {
        layer: &'static str,
        best: Box<PartialSolution>,
    },

    #[error("near-feasible point not found; best ||[c(x)]+||^2 = {best_phi}")]
    FeasibilityNotFound { best_phi: f64, x: Vec<f64> },

    #[error("missing constant `{0}`")]
    MissingConstant(&'static str),

    #[error("unknown instance `{0}`")]
    NotFound(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(what: &str, v: &[f64]) -> Result<()> {
    if v.iter().all(|e| e.is_finite()) {
        Ok(())
    } else {
        Err(Error::NumericalFailure(format!("non-finite {what}")))
    }
}
