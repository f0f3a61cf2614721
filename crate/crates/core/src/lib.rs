//! Numerical toolkit for the FitzHugh-Nagumo relaxation oscillator.
//!
//! - [`model`]: parameters, state and the vector field.
//! - [`stability`]: equilibria, eigenvalues, Hopf points, bifurcation branch, nullclines.
//! - [`collocation`]: Taylor-polynomial collocation solver for the initial-value problem.
//! - [`fdm`]: explicit forward-difference scheme and its stability estimates.
//! - [`harness`]: reference integrator, convergence tables, CSV/JSON export and the CLI.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod collocation;
pub mod fdm;
pub mod harness;
pub mod model;
pub mod stability;

pub use model::{cubic, cubic_derivative, rhs, Derivative, FhnParams, State};
