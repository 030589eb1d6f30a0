use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("{method} did not converge after {iterations} iterations (last estimate {estimate:e}, residual {residual:e})")]
    NonConvergence {
        method: &'static str,
        iterations: usize,
        estimate: f64,
        residual: f64,
    },

    #[error("eigensolver did not converge after {iterations} iterations (best value {:e}, residual {:e})", best.value, best.residual)]
    EigenNonConvergence {
        iterations: usize,
        best: Box<crate::linalg::EigPair>,
    },

    #[error("conjugate gradient did not converge after {iterations} iterations (residual {residual:e})")]
    CgNonConvergence {
        iterations: usize,
        residual: f64,
        best: Box<nalgebra::DMatrix<f64>>,
    },

    #[error("operation requires a {expected} objective, found {found}")]
    WrongObjective {
        expected: &'static str,
        found: &'static str,
    },

    #[error("certificate check failed: {0}")]
    Certificate(String),

    #[error("instance generation failed: {0}")]
    Generation(String),

    #[error("dual degeneracy: gamma_Q = {0:e} below threshold")]
    DualDegenerate(f64),

    #[error("diagnostic sampling failed: {0}")]
    Sampling(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_err(context: &'static str, expected: impl ToString, got: impl ToString) -> Error {
    Error::Dimension {
        context,
        expected: expected.to_string(),
        got: got.to_string(),
    }
}
