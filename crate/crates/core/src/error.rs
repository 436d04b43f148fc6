//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A non-finite coefficient appeared while building or evaluating a
    /// power-series step. The caller is expected to shrink the step size.
    #[error("step diverged: non-finite coefficient in row {row} at order {order}")]
    StepDiverged { row: usize, order: usize },

    /// Geometric-tail error estimate diverges (convergence radius r >= 1).
    #[error("truncation-error series diverges (r = {r})")]
    ErrorSeriesDiverged { r: f64 },

    /// D(z) vanishes in the controller stability probe.
    #[error("stability probe pole: D(z) = 0 at z = {0}")]
    ProbePole(num_complex::Complex<f64>),

    #[error("invalid augmented-system spec: {0}")]
    InvalidSpec(String),

    #[error("power flow did not converge within {0} iterations")]
    PowerFlowDiverged(usize),

    #[error("network topology error: {0}")]
    Topology(String),

    #[error("singular matrix while {0}")]
    Singular(String),

    #[error("initialization error: {0}")]
    Init(String),

    #[error("event schedule error: {0}")]
    Event(String),

    #[error("case error: {0}")]
    Case(String),

    #[error("simulation diverged at t = {0}")]
    SolverDiverged(f64),

    #[error("trace comparison error: {0}")]
    Comparison(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
