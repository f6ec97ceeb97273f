use thiserror::Error;

/// Errors raised by the learning laboratory.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("malformed adjacency: {0}")]
    MalformedAdjacency(String),
    #[error("adjacency is not symmetric: {from} -> {to} has no reverse edge")]
    SymmetryViolation { from: usize, to: usize },
    #[error("invalid combination matrix: {0}")]
    InvalidMatrix(String),
    #[error("combination matrix is reducible (not strongly connected): agent {agent} cannot reach every other agent")]
    Reducible { agent: usize },
    #[error("combination matrix is periodic (period {period}); primitivity requires an aperiodic graph")]
    Periodic { period: usize },
    #[error("degenerate hypothesis pair: theta = theta0 = {0}")]
    DegeneratePair(usize),
    #[error("likelihood is zero at the observation for hypothesis {hypothesis} (support violation)")]
    SupportViolation { hypothesis: usize },
    #[error("{family} LMGF overflowed at t = {t}")]
    LmgfOverflow { family: &'static str, t: f64 },
    #[error("quadrature failed to converge: estimate {estimate}, error bound {error}")]
    QuadratureFailure { estimate: f64, error: f64 },
    #[error("root not bracketed on [{lo}, {hi}]: f(lo) = {f_lo}, f(hi) = {f_hi}")]
    RootBracketing { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },
    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue})")]
    NotPsd { min_eigenvalue: f64 },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("invalid plan: {0}")]
    Plan(String),
    #[error("insufficient data: {usable} usable points, at least {required} required")]
    InsufficientData { usable: usize, required: usize },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for failures of the numerical machinery (root bracketing,
    /// quadrature, overflow) as opposed to bad inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::QuadratureFailure { .. } | Error::RootBracketing { .. } | Error::LmgfOverflow { .. })
    }
}
