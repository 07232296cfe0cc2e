//! Weighted spectral-Galerkin solver for the degenerate Heston pricing PDE.
//!
//! The crate discretizes the Heston operator in the weighted space
//! `L^2(xi^(beta-1) exp(-gamma |x| - mu xi) dx dxi)` on a Hermite x Laguerre
//! tensor basis and time-steps the resulting Galerkin system along real and
//! complex directions. Prices are cross-checked against independent oracles.
//!
//! Modules follow the pipeline:
//!
//! * [`params`]: model inputs and admissibility constants.
//! * [`quadspace`]: weighted quadrature and inequality checkers.
//! * [`basis`]: Hermite and Laguerre functions and projection.
//! * [`operator`]: Galerkin matrices and coercivity certification.
//! * [`evolution`]: time stepping and energy envelopes.
//! * [`pricing`]: payoffs, price surfaces and the sign diagnostic of `du/dxi`.
//! * [`oracle`]: independent reference prices.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod error;
pub mod evolution;
pub mod operator;
pub mod oracle;
pub mod params;
pub mod pricing;
pub mod quadspace;

pub use error::{Error, Result};
