use thiserror::Error;

/// Errors raised by chart evaluation and the numerical experiments built on it.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("point {point:?} lies outside the chart domain (axis {axis})")]
    PointOutsideDomain { point: Vec<f64>, axis: usize },

    #[error("finite-difference stencil of width {width:e} at {point:?} clips the boundary of axis {axis}")]
    StencilClipsBoundary {
        point: Vec<f64>,
        axis: usize,
        width: f64,
    },

    #[error("metric is not positive definite at {point:?}")]
    NonPositiveDefinite { point: Vec<f64> },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown chart id `{0}`")]
    UnknownChart(String),

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("geodesic left the chart domain at arc length {at:e}")]
    LeftDomain { at: f64 },

    #[error("geodesic speed drifted by {drift:e}; integration step too large")]
    StepTooLarge { drift: f64 },

    #[error("shooting did not converge after {iterations} iterations (residual {residual:e})")]
    ShootingDiverged { iterations: usize, residual: f64 },

    #[error("shooting Jacobian is near-singular (|det| = {det:e}); conjugate point suspected")]
    ConjugatePointSuspected { det: f64 },

    #[error("Van Vleck determinant is negative ({0:e}); conjugate point crossed")]
    NegativeDeterminant(f64),

    #[error("least-squares fit is ill-conditioned (condition number {0:e})")]
    FitIllConditioned(f64),

    #[error("deformation map is not invertible at {point:?}")]
    NotInvertible { point: Vec<f64> },

    #[error("wave function is not normalized: norm {norm}")]
    NotNormalized { norm: f64 },

    #[error("grid violates chart guard margins: {0}")]
    GuardViolation(String),

    #[error("assembled Hamiltonian asymmetry {0:e} exceeds tolerance")]
    AsymmetryExceeded(f64),

    #[error("eigensolver failure: {0}")]
    SolverFailure(String),
}

pub type Result<T> = std::result::Result<T, Error>;
