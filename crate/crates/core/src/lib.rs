//! Volterra Gaussian processes: simulation, measure-preserving transformations,
//! bridges, and the two-sided Fourier-Laguerre expansion of Gaussian martingales.
//!
//! The crate is organised around a discrete carrier, [`kernels::TimeGrid`], on
//! which Volterra kernels, quadratic variations and all integrand-space
//! operators are realised as dense matrices. Everything downstream (path
//! synthesis, transforms, series expansions, statistical verification) works
//! on grid-indexed data and is deterministic given a seed.

pub mod error;
pub mod kernels;
pub mod simulate;
pub mod specfun;

pub use error::{Error, Result};
pub use kernels::{DiscreteKernel, EvalPoint, QuadraticVariation, TimeGrid};
pub use simulate::PathEnsemble;
