//! Linear stochastic Hamiltonian (LSH) systems coupled through
//! inerter-spring-damper links.
//!
//! The crate assembles the state-space realization of an LSH system,
//! interconnects two of them, evaluates the steady-state mean-square cost
//! through algebraic Lyapunov equations, differentiates that cost with respect
//! to the coupling parameters and minimises it by projected gradient descent.
//! A Monte Carlo simulator provides an independent statistical check.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod coupling;
pub mod error;
pub mod gramians;
pub mod linalg;
pub mod lsh;
pub mod optimize;
pub mod performance;
pub mod scenario;
pub mod simulate;

pub use error::{Error, Result};
