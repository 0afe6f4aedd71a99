use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("operation is not defined for an empirical distribution")]
    UnsupportedForEmpirical,

    #[error("numerical failure: {0}")]
    Numerics(String),

    #[error("no root: f({lo}) and f({hi}) have the same sign")]
    NoRoot { lo: f64, hi: f64 },

    #[error("layer ordering violated: {0}")]
    LayerOrder(String),

    #[error("calibration did not converge (best objective {best}): {reason}")]
    Calibration { best: f64, reason: String },

    #[error("observation {0} is impossible under the contract")]
    ImpossibleObservation(f64),

    #[error("every grid point has zero likelihood")]
    DegenerateData,

    #[error("extension infeasible: {0}")]
    ExtensionInfeasible(String),

    #[error("omega* = {omega} outside the admissible interval (0, {upper})")]
    OmegaOutOfBound { omega: f64, upper: f64 },

    #[error("admissible set A is empty")]
    EmptyAdmissibleSet,

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
