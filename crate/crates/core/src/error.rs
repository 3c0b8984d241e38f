use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("grid subdivision count must be at least 2, got {0}")]
    InvalidGrid(usize),

    #[error("size mismatch: expected {expected} values, found {found}")]
    SizeMismatch { expected: usize, found: usize },

    #[error("fields live on different grids (N = {left} vs N = {right})")]
    GridMismatch { left: usize, right: usize },

    #[error("non-finite value at index {0}")]
    NonFinite(usize),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("coarsening factor must be 2, 3 or 4, got {0}")]
    InvalidCoarsening(usize),

    #[error("N = {n} is not divisible by q = {q}")]
    NotDivisible { n: usize, q: usize },

    #[error("dense oracle is limited to N <= {limit}, got N = {n}")]
    OracleTooLarge { n: usize, limit: usize },

    #[error("dense matrix is singular")]
    Singular,

    #[error("symbol of the smoother is singular at theta = ({theta1}, {theta2})")]
    SingularSymbol { theta1: f64, theta2: f64 },

    #[error("PCG breakdown at iteration {iteration}: curvature {curvature:e} <= 0")]
    PcgBreakdown { iteration: usize, curvature: f64 },

    #[error("Krylov solve stalled after {iterations} iterations (relative residual {rel_residual:e})")]
    KrylovStalled { iterations: usize, rel_residual: f64 },
    #[error("line search failed after {halvings} halvings at SSN iteration {iteration}")]
    LineSearchFailed { iteration: usize, halvings: usize },

    #[error("multigrid failed to converge in {iterations} iterations (relative residual {relative_residual:e})")]
    MultigridDiverged {
        iterations: usize,
        relative_residual: f64,
    },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
