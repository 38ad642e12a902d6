use thiserror::Error;

/// Errors raised across the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("value {value} outside the computed range (max {max})")]
    OutOfRange { value: f64, max: f64 },

    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("model invariant violated: {0}")]
    ModelInvariant(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("grading invariant violated: {0}")]
    Grading(String),

    #[error("no convergence after {iterations} iterations ({converged} of {wanted} pairs locked)")]
    NoConvergence {
        iterations: usize,
        wanted: usize,
        converged: usize,
        best_values: Vec<f64>,
        best_residuals: Vec<f64>,
    },

    #[error("quadrature cannot resolve the integrand: {0}")]
    Resolution(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
