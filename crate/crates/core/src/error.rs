use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("insufficient history: need at least {needed} values, got {available}")]
    InsufficientHistory { needed: usize, available: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("insufficient overlap: {0}")]
    InsufficientOverlap(String),

    #[error("coordinate descent did not converge after {sweeps} sweeps (KKT violation {kkt_violation:.3e})")]
    Convergence { sweeps: usize, kkt_violation: f64 },

    #[error("no path model has between {min_active} and {max_active} active features")]
    EnsembleEmpty { min_active: usize, max_active: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{source_name}:{line}: {message}")]
    Ingestion {
        source_name: String,
        line: usize,
        message: String,
    },
}

impl Error {
    /// True for failures of the numerical machinery (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Convergence { .. } | Error::Numerical(_))
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn alignment(msg: impl Into<String>) -> Self {
        Error::Alignment(msg.into())
    }
}
