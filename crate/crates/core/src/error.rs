use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Failures raised by the numerical routines.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("rank-deficient Jacobian (sigma_min = {sigma_min:e}, sigma_max = {sigma_max:e})")]
    RankDeficient { sigma_min: f64, sigma_max: f64 },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("fiber trace exceeded {max_nodes} nodes without closing")]
    MaxNodesExceeded { max_nodes: usize },

    #[error("fiber trace broke down at node {node}: {reason}")]
    TraceBreakdown { node: usize, reason: String },

    #[error("all node densities underflow; profile has zero mass")]
    ZeroMass,

    #[error("all {starts} optimizer starts failed")]
    AllStartsFailed { starts: usize },

    #[error("{discarded} of {total} sampled fibers were singular or untraceable")]
    TooManySingularFibers { discarded: usize, total: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl Error {
    /// Short machine-readable tag, used in structured error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NonFinite(_) => "NonFinite",
            Error::RankDeficient { .. } => "RankDeficient",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::MaxNodesExceeded { .. } => "MaxNodesExceeded",
            Error::TraceBreakdown { .. } => "TraceBreakdown",
            Error::ZeroMass => "ZeroMass",
            Error::AllStartsFailed { .. } => "AllStartsFailed",
            Error::TooManySingularFibers { .. } => "TooManySingularFibers",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::InvalidInput(_) => "InvalidInput",
        }
    }
}
