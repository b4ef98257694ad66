use thiserror::Error;

use crate::lq_oracle::DegeneracyReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("{what} = {value} outside the domain {domain}")]
    Domain {
        what: &'static str,
        value: f64,
        domain: String,
    },

    #[error("degenerate linear-quadratic problem: {0}")]
    Degenerate(DegeneracyReport),

    #[error("singular shooting system (determinant {determinant:e})")]
    SingularShooting { determinant: f64 },

    #[error("Newton iteration stalled after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("cost callback returned a non-finite value in `{callback}`")]
    Callback { callback: &'static str },

    #[error("argmax iterate |a| = {magnitude:e} exceeds the coercivity bound {bound:e}")]
    Coercivity { magnitude: f64, bound: f64 },

    #[error(
        "consistency fixed point is not contractive (factor estimate {factor:.4} after {iterations} iterations)"
    )]
    NonContraction { factor: f64, iterations: usize },

    #[error("outer Picard loop diverged at iteration {iteration} (update norm {update:e})")]
    Divergence { iteration: usize, update: f64 },

    #[error("outer Picard loop hit {iterations} iterations (update norm {update:e})")]
    MaxIterations { iterations: usize, update: f64 },

    #[error("state blew up on path {path} at node {node}")]
    BlowUp { path: usize, node: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("empty sample set")]
    Empty,

    #[error("assignment size {0} exceeds the exact-solver limit of 64")]
    TooLarge(usize),

    #[error("{0}")]
    Io(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
