use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FaseError {
    #[error("invalid basis dimension: {0}")]
    InvalidDimension(String),
    #[error("degenerate index domain: {0}")]
    DegenerateDomain(String),
    #[error("index {x} lies outside the basis domain [{lo}, {hi}]")]
    OutOfDomain { x: f64, lo: f64, hi: f64 },
    #[error("unsupported spline order {0}; the curvature penalty needs order >= 2")]
    UnsupportedOrder(usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid snapshot series: {0}")]
    InvalidSeries(String),
    #[error("gradient descent diverged: {0}")]
    Divergence(String),
    #[error("design matrix is rank deficient (B^T B is singular)")]
    RankDeficientDesign,
    #[error("model too complex for the data: 2qd = {two_qd} must be below nm = {nm}")]
    InvalidComplexity { two_qd: usize, nm: usize },
    #[error("infeasible density {density} for d = {d}: coordinate scale {scale:.4} exceeds 1")]
    InfeasibleDensity { density: f64, d: usize, scale: f64 },
    #[error("resource limit: {0}")]
    ResourceLimit(String),
    #[error("tuning grid is invalid: {0}")]
    InvalidGrid(String),
}

impl FaseError {
    /// True for failures caused by numerics rather than by malformed inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(self, FaseError::Divergence(_) | FaseError::RankDeficientDesign)
    }
}

pub type Result<T, E = FaseError> = std::result::Result<T, E>;
