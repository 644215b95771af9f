//! Online selection of an increasing subsequence from a marked Poisson
//! process.
//!
//! The crate solves the optimality equation in the size variable
//! `z = sqrt(t)`, simulates the planar selection process and its
//! one-dimensional piecewise-deterministic Markov representation, and
//! provides the renewal-approximation machinery used to study the
//! asymptotics of the selected length.
//!
//! Module map:
//! - [`value_solver`]: optimality equation, `Ein`, the comparison operator.
//! - [`strategies`]: planar acceptance windows and the window/control mapping.
//! - [`planar_sim`]: Monte Carlo of the planar process and the fixed-n rule.
//! - [`pdmp`]: controls, path simulation, reward and moment equations, coverage.
//! - [`renewal`]: cycle distributions, the limiting step `H`, CLT and dominance.
//! - [`stats`]: streaming moments, least-squares fits, KS and chi-square tools.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod integro;
pub mod pdmp;
pub mod planar_sim;
pub mod quad;
pub mod renewal;
pub mod rng;
pub mod stats;
pub mod strategies;
pub mod value_solver;

pub use error::{Error, Result};

/// `sqrt(2)`, the leading slope of the value function in the size variable.
pub const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// `1/sqrt(2)`, the limiting control and the mean of the cycle step `H`.
pub const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;
