use thiserror::Error;

/// Errors surfaced by simulation, oracle, and IO operations.
#[derive(Debug, Error)]
pub enum Error {
    /// Model parameters violate a precondition (e.g. Kac factor needs N >= 2).
    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// A pair operation was called with i == j or an out-of-range site.
    #[error("invalid pair ({i}, {j}) for {n} sites")]
    InvalidPair { i: usize, j: usize, n: usize },

    /// An API contract was violated by the caller (layout mismatch, empty
    /// sample set, duplicate flip sites, missing channel expectations, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Every eigenvalue of S fell below the relative cutoff; the variational
    /// linear system carries no usable signal at this step.
    #[error("degenerate quantum geometric tensor at t = {time}: {detail}")]
    DegenerateTensor { time: f64, detail: String },

    /// Requested a closed-form quantity outside its domain of validity.
    #[error("unsupported regime: {0}")]
    UnsupportedRegime(String),

    /// Dense Hilbert-space object would exceed the configured size limits.
    #[error("capacity exceeded: {0}")]
    Capacity(String),

    /// Squeezing parameter undefined because |M| is numerically zero.
    #[error("undefined squeezing: |M| = {m_norm} below 1e-6")]
    UndefinedSqueezing { m_norm: f64 },

    /// Run configuration is invalid or inconsistent.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Too many trajectories failed to complete.
    #[error("attrition {failed}/{total} exceeds 10% cap")]
    Attrition { failed: usize, total: usize },

    /// CSV tables cannot be compared (disjoint time ranges, bad columns).
    #[error("comparison error: {0}")]
    Comparison(String),

    /// Malformed CSV or manifest content.
    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
