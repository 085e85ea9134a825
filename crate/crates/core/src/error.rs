use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input lies outside the domain of a formula (e.g. `δ ≤ 0`).
    #[error("domain error: {0}")]
    Domain(String),

    /// `γ` exceeds the critical exponent, so the Darcy limit is not guaranteed.
    #[error("outside the Darcy validity range: gamma = {gamma} > gamma_c = {gamma_c}")]
    Validity { gamma: f64, gamma_c: f64 },

    #[error("geometry error: {0}")]
    Geometry(String),

    /// The cell problem has no solution for this geometry.
    #[error("incompatible cell problem: {0}")]
    Incompatible(String),

    #[error("solver did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid tensor: {0}")]
    Tensor(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
