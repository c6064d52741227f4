use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("coordinate {axis} = {value} lies outside [{lo}, {hi}]")]
    Domain {
        axis: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("point is not on the manifold (residual {residual:e} > {tol:e})")]
    NotOnManifold { residual: f64, tol: f64 },
    #[error("constraint Jacobian in y is singular (smallest singular value {sigma_min:e})")]
    SingularReduction { sigma_min: f64 },
    #[error(
        "projection onto the manifold failed after {iterations} iterations (residual {residual:e})"
    )]
    Projection { iterations: usize, residual: f64 },
    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },
    #[error("step budget of {max_steps} exhausted at t = {t}")]
    StepBudget { max_steps: usize, t: f64 },
    #[error("time {t} lies outside the segment [{t0}, {t1}]")]
    OutOfSegment { t: f64, t0: f64, t1: f64 },
    #[error("delayed lookup at t = {t} falls in a gap of the interpolant")]
    InterpolantGap { t: f64 },
    #[error("solution escaped at t = {t_escape} before reaching t = {t_end}")]
    NotInDomain { t_escape: f64, t_end: f64 },
    #[error("not admissible: {0}")]
    Admissibility(String),
    #[error("result could not be certified: {0}")]
    Uncertified(String),
    #[error("Newton iteration did not converge: {message}")]
    Convergence {
        message: String,
        residuals: Vec<f64>,
    },
    #[error("quadrature failed to reach tolerance (achieved {achieved:e})")]
    Quadrature { achieved: f64 },
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("unknown problem `{0}`")]
    UnknownProblem(String),
}

pub type Result<T> = std::result::Result<T, Error>;
