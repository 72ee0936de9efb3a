use thiserror::Error;

/// Errors raised by the kinetic geometry toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("shape mismatch for {what}: expected {expected}, got {got}")]
    Shape { what: &'static str, expected: String, got: String },

    #[error("input error: {0}")]
    Input(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("non-finite value detected at step {step}")]
    NonFinite { step: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("presymplectic equation has no solution on the final constraint set (residual {residual:.3e})")]
    Contradiction { residual: f64 },

    #[error("constraint iteration did not stabilize within {0} steps")]
    NoStabilization(usize),

    #[error("eigen solver did not converge: {0}")]
    Eigen(String),

    #[error("no dispersion root found in search window; best scan minima: {minima:?}")]
    NoRoot { minima: Vec<(f64, f64, f64)> },

    #[error("no single-valued Casimir: F0 is not decreasing in energy on v in [{lo}, {hi}]")]
    NonMonotone { lo: f64, hi: f64 },

    #[error("degenerate profile: dF0/de vanishes on v in [{lo}, {hi}]")]
    DegenerateProfile { lo: f64, hi: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_err(what: &'static str, expected: impl ToString, got: impl ToString) -> Error {
    Error::Shape { what, expected: expected.to_string(), got: got.to_string() }
}
