use thiserror::Error;

/// Errors raised by the numerical kernels, builders and simulations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("pole: {0}")]
    Pole(String),

    #[error("graph construction failed: {0}")]
    Construction(String),

    #[error("structural error: {0}")]
    Structural(String),

    #[error("direction is not admissible: {0}")]
    NotAdmissible(String),

    #[error("root location failed: {0}")]
    RootNotFound(String),

    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("region too small: vertex {vertex} at boundary depth {depth} became unstable")]
    RegionTooSmall { vertex: usize, depth: u32 },

    #[error("refused: {0}")]
    Refused(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("empty selection: {0}")]
    Empty(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
