use thiserror::Error;

use crate::classflow::Trajectory;
use crate::phase::PhasePoint;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("field evaluation produced a non-finite value at t = {t}")]
    Field { t: f64 },

    #[error("metric is not positive definite at {witness:?} (smallest eigenvalue {min_eigenvalue:.3e})")]
    NotPositiveDefinite {
        witness: Vec<f64>,
        min_eigenvalue: f64,
    },

    #[error("integration exhausted {steps} steps at t = {t}")]
    Divergence {
        steps: usize,
        t: f64,
        partial: Box<Trajectory>,
    },

    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },

    #[error("scattering limit not certified by |t| = {horizon}: tail estimate {tail:.3e} > {tol:.3e}")]
    NonConvergence { horizon: f64, tail: f64, tol: f64 },

    #[error("inverse scattering map failed after {iterations} iterations (best residual {residual:.3e})")]
    InversionFailure {
        iterations: usize,
        residual: f64,
        best: PhasePoint,
    },

    #[error("grid error: {0}")]
    Grid(String),

    #[error("norm drift {drift:.3e} exceeded {bound:.3e} at step {step}")]
    Stability { step: usize, drift: f64, bound: f64 },

    #[error("boundary mass {mass:.3e} exceeded {bound:.3e} at t = {t}; enlarge the domain")]
    DomainTooSmall { t: f64, mass: f64, bound: f64 },

    #[error("linear solver stalled after {iterations} iterations (residual {residual:.3e})")]
    SolverStall { iterations: usize, residual: f64 },

    #[error("quadrature error: {0}")]
    Quadrature(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("format error: {0}")]
    Format(String),
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}
