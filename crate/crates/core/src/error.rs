use alloc::string::String;

/// Failure modes shared by every numerical routine in the crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("quadrature missed tolerance {requested:e} (achieved {achieved:e} after {evals} evaluations)")]
    Tolerance {
        requested: f64,
        achieved: f64,
        evals: usize,
    },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("step size {dt:e} is unstable here; use dt <= {suggested_dt:e}")]
    Stability { dt: f64, suggested_dt: f64 },
    #[error("state is absorbing, exit time is infinite")]
    Absorbing,
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

pub(crate) fn dim(msg: impl Into<String>) -> Error {
    Error::Dimension(msg.into())
}
