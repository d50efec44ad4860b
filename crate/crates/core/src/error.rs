use thiserror::Error;

/// Errors produced by the estimation and testing routines.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum MtaError {
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("lasso did not converge after {sweeps} sweeps (KKT residual {kkt_residual:.3e})")]
    Convergence {
        sweeps: usize,
        kkt_residual: f64,
        last_iterate: Vec<f64>,
    },
    #[error("degenerate column {column}: residual variance {tau_sq:.3e}")]
    DegenerateColumn { column: usize, tau_sq: f64 },
    #[error("response is constant; cannot slice")]
    DegenerateResponse,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, MtaError>;

pub(crate) fn ensure_finite(values: &[f64], what: &str) -> Result<()> {
    if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
        return Err(MtaError::InvalidData(format!(
            "{what} has a non-finite entry at position {pos}"
        )));
    }
    Ok(())
}
