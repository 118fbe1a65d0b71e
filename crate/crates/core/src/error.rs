use thiserror::Error;

use crate::coefficients::expr::{EvalError, ParseError};
use crate::quadrature::QuadratureError;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("Q is not symmetric at x = {x} (residual {residual:e})")]
    NotSymmetric { x: f64, residual: f64 },
    #[error("R is not positive definite at x = {x} (smallest eigenvalue {eigenvalue:e})")]
    NotPositive { x: f64, eigenvalue: f64 },
    #[error("coefficient is not finite at x = {x}")]
    NotFinite { x: f64 },
    #[error("{what} is not integrable toward x = {endpoint}")]
    NotIntegrable { what: String, endpoint: f64 },
    #[error("step size underflow at x = {x} (non-integrable coefficient singularity?)")]
    StepUnderflow { x: f64 },
    #[error("step budget exhausted at x = {x}")]
    TooManySteps { x: f64 },
    #[error("solution overflowed at x = {x}")]
    Overflow { x: f64 },
    #[error("{0}")]
    Endpoint(String),
    #[error("Volterra seed iteration did not contract (last difference {difference:e}, seed length {seed:e})")]
    SeedNoContraction { difference: f64, seed: f64 },
    #[error("Weyl solution did not stabilize along the truncation schedule; differences {differences:?}")]
    WeylNoConvergence { differences: Vec<f64> },
    #[error("z = {re}{im:+}i is numerically an eigenvalue (W(Φ, ψ) = {wronskian:e})")]
    AtEigenvalue { re: f64, im: f64, wronskian: f64 },
    #[error("transform is not admissible at x = {x}: {reason}")]
    Transform { x: f64, reason: String },
}
