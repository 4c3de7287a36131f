use std::path::PathBuf;

/// Process exit codes, one per error family.
///
/// Scripts dispatch on these, so the mapping is part of the public
/// interface: 2 usage, 3 data, 4 numeric, 5 infeasibility.
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;
pub const EXIT_INFEASIBLE: i32 = 5;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("usage: {0}")]
    Usage(String),

    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("parsing {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("dataset column {0:?} is missing")]
    MissingColumn(String),

    #[error("record {row}: {message}")]
    BadRecord { row: usize, message: String },

    #[error("{context}: need at least {needed} observations, got {got}")]
    InsufficientData {
        context: String,
        needed: usize,
        got: usize,
    },

    #[error("sample variance is zero; the test statistic is undefined")]
    ZeroVariance,

    #[error("covariance matrix is singular or too ill-conditioned to invert")]
    SingularCovariance,

    #[error("model is undefined at dose {dose}: requires {requirement}")]
    DomainViolation { dose: f64, requirement: String },

    #[error("{0} of {1} bootstrap refits failed; distribution is unreliable")]
    BootstrapFailure(usize, usize),

    #[error("threshold for parameter {parameter:?} needs widening factor {factor:.1}, above the cap {cap}")]
    ThresholdFailure {
        parameter: String,
        factor: f64,
        cap: f64,
    },

    #[error("monitoring needs all six parameter thresholds; {0:?} is unavailable")]
    IncompleteThresholds(String),

    #[error("fit did not converge within {0} iterations from any start")]
    NoConvergence(usize),

    #[error("configuration: {0}")]
    Config(String),

    #[error("argument out of domain: {0}")]
    Argument(String),
}

impl Error {
    /// Exit code family for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Config(_) | Error::Argument(_) => EXIT_USAGE,
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::MissingColumn(_)
            | Error::BadRecord { .. }
            | Error::InsufficientData { .. } => EXIT_DATA,
            Error::ZeroVariance | Error::SingularCovariance | Error::NoConvergence(_) => {
                EXIT_NUMERIC
            }
            Error::DomainViolation { .. }
            | Error::BootstrapFailure(..)
            | Error::ThresholdFailure { .. }
            | Error::IncompleteThresholds(_) => EXIT_INFEASIBLE,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
