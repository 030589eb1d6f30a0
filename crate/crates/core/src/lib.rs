//! Low-rank semidefinite programming through the Burer-Monteiro factorization
//! `X = R R^T` and the exact penalty
//!
//! ```text
//! phi(R) = f(R R^T) + lambda ||A(R R^T) - b||_2
//! ```
//!
//! minimized by a prox-linear method whose subproblems are solved with
//! proximal operator graph splitting.

pub mod baselines;
pub mod cg;
pub mod diagnostics;
pub mod error;
pub mod generate;
pub mod linalg;
pub mod pogs;
pub mod problem;
pub mod prox_linear;

pub use error::{Error, Result};
pub use linalg::{Factor, LinOpA, SymMat};
pub use problem::{Certificate, Instance, Objective, PenaltyParams};
pub use prox_linear::{prox_linear_solve, SolveConfig, SolveOutput, SolveStatus, TraceRecord};
