use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("adaptive quadrature missed tolerance {abstol:e} for mode {mode} (error estimate {estimate:e})")]
    QuadratureNonConvergence { mode: i64, estimate: f64, abstol: f64 },

    #[error("characteristic root solve failed for xi = {0}")]
    RootFinder(Complex64),

    #[error("stability boundary denominator vanishes at theta = {0}")]
    DegenerateBoundary(f64),

    #[error("every trial step was stable; the spectrum admits no finite critical step")]
    UnboundedTimestep,

    #[error("no stable time step exists for s = {s}")]
    NoStableTimestep { s: usize },

    #[error("multistep state needs {needed} history levels, has {available}")]
    InsufficientHistory { needed: usize, available: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

pub(crate) fn check_len(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            found,
        })
    }
}
