//! Sparse linear regression with a unit-sum constraint.
//!
//! The estimator solves
//!
//! ```text
//!     minimize    ||y - X b||^2
//!     subject to  sum(b) = 1,  ||b||_0 <= k,  ||b||_1 <= 1 + 2s
//! ```
//!
//! where `k` caps the number of nonzero weights and `s` caps the total
//! negative (short) mass. The crate provides:
//!
//! * [`ortho`]: the exact solver for orthogonal designs, which doubles as the
//!   projection onto the feasible set,
//! * [`dfo`]: discrete first-order descent for general designs,
//! * [`l1path`]: the convex `k = m` solver and a forward-stepwise initializer,
//! * [`mio`]: the mixed-integer model, big-M bounds, a branch-and-bound solver
//!   and LP-format export,
//! * [`experiments`]: the simulation harness,
//! * [`tracker`]: the index-tracking pipeline.

// Negated comparisons are used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
pub mod dfo;
pub mod error;
pub mod experiments;
pub mod l1path;
pub mod mio;
pub mod ortho;
pub mod problem;
mod quadratic;
pub mod tracker;

pub use error::{Error, Result};
pub use problem::{
    is_feasible, negative_sum, objective, ConstraintSpec, RegressionData, SolveReport, SolveStatus,
    Weights, FEASIBILITY_TOL, ZERO_TOL,
};
