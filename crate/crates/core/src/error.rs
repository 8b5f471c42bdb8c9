use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{field} must be positive, got {value}")]
    NonPositive { field: &'static str, value: f64 },

    #[error("{field} must be finite and non-negative, got {value}")]
    InvalidValue { field: &'static str, value: f64 },

    #[error("bad jump mixture: {0}")]
    BadMixture(String),

    #[error("cannot sample from an empty mixture")]
    EmptyMixture,

    #[error("r = {r} is within rounding of the pole {pole}")]
    PoleHit { r: f64, pole: f64 },

    #[error("no sign change of the characteristic polynomial on ({lo}, {hi})")]
    BracketFailure { lo: f64, hi: f64 },

    #[error("matrix is numerically singular (det = {det:e}, norm = {norm:e})")]
    SingularMatrix { det: f64, norm: f64 },

    #[error("adaptive quadrature exceeded {evaluations} integrand evaluations")]
    QuadratureNonConvergence { evaluations: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    /// Stable machine-readable tag, used in structured error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NonPositive { .. } => "NonPositive",
            Error::InvalidValue { .. } => "InvalidValue",
            Error::BadMixture(_) => "BadMixture",
            Error::EmptyMixture => "EmptyMixture",
            Error::PoleHit { .. } => "PoleHit",
            Error::BracketFailure { .. } => "BracketFailure",
            Error::SingularMatrix { .. } => "SingularMatrix",
            Error::QuadratureNonConvergence { .. } => "QuadratureNonConvergence",
            Error::InvalidConfig(_) => "InvalidConfig",
        }
    }
}
