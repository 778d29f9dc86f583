use serde::Serialize;
use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Error, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("negative power of a singular spectrum (eigenvalue {eigenvalue:e})")]
    Singular { eigenvalue: f64 },

    #[error("normal-cone inverse is multivalued at zero with no regularization")]
    Indeterminate,

    #[error("newton iteration failed after {iterations} iterations, residual {residual:e}")]
    NewtonFailure { iterations: usize, residual: f64 },

    #[error("time step {step} failed after {halvings} halvings, residual {residual:e}")]
    StepFailure {
        step: usize,
        halvings: u32,
        residual: f64,
    },

    #[error("singular linear system at step {step}")]
    SingularSystem { step: usize },

    #[error("equivalent control norm {norm:e} exceeds the bound {radius:e} at t = {time}")]
    Saturation { norm: f64, radius: f64, time: f64 },

    #[error("control step {step} has norm {norm:e} above the radius {radius:e}")]
    Inadmissible { step: usize, norm: f64, radius: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
