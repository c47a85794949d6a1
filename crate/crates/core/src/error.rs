use thiserror::Error;

/// Errors raised anywhere in the workbench.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("mesh generation failed: {0}")]
    Mesh(String),

    #[error("resolution gate violated: h = {h} exceeds {limit}")]
    ResolutionGate { h: f64, limit: f64 },

    #[error("coefficient violates elasticity symmetry: {0}")]
    Coefficient(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error in field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("study `{study}` failed at ε = {epsilon}: {message}")]
    StudyFailed { study: String, epsilon: f64, message: String },

    #[error("cache error: {0}")]
    Cache(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
