//! Numerical spectral theory for one-dimensional Dirac operators
//! `τf = R⁻¹(Jf' + Qf)` with symmetric potential Q and positive weight R.

pub mod boundary;
pub mod coefficients;
pub mod debranges;
pub mod error;
pub mod gauge;
pub mod ode;
pub mod quadrature;
pub mod weyl;

pub use error::{Error, Result};
