use alloc::string::String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SuotError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("matrix is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },
    #[error("retraction leaves the SPD cone (smallest eigenvalue of Id + X is {min_eigenvalue:e})")]
    RetractionOutOfCone { min_eigenvalue: f64 },
    #[error("delta {delta} too large: smallest singular value {min_singular_value:e} is below delta/4")]
    DeltaTooLarge { delta: f64, min_singular_value: f64 },
    #[error("weighted mean system is singular (smallest eigenvalue {min_eigenvalue:e})")]
    SingularSystem { min_eigenvalue: f64 },
    #[error("non-finite value produced in {0}")]
    NonFinite(&'static str),
    #[error("iterate {iteration} left the eigenvalue box: spectrum [{min_eigenvalue:e}, {max_eigenvalue:e}], rho {rho}")]
    BoxViolation {
        iteration: usize,
        min_eigenvalue: f64,
        max_eigenvalue: f64,
        rho: f64,
    },
    #[error("no restart reached stationarity (best FD gradient norm {best_grad_norm:e})")]
    NonConvergence { best_grad_norm: f64 },
}

pub type Result<T> = core::result::Result<T, SuotError>;

pub(crate) fn invalid(msg: impl Into<String>) -> SuotError {
    SuotError::InvalidInput(msg.into())
}
