use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("document `{id}` has {tokens} tokens, fewer than the minimum of {min}")]
    DocumentTooShort { id: String, tokens: usize, min: usize },
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("invalid hyper-parameter: {0}")]
    InvalidHyperparam(String),
    #[error("invalid thresholds: need 0 <= tau_d < tau_s <= 1, got tau_d={tau_d}, tau_s={tau_s}")]
    InvalidThresholds { tau_s: f64, tau_d: f64 },
    #[error("matrix is not positive definite ({0})")]
    NotPositiveDefinite(&'static str),
    #[error("epsilon {0} outside [0.05, 0.15]")]
    InvalidEpsilon(f64),
    #[error("ensemble size must be odd, got {0}")]
    EvenEnsemble(usize),
    #[error("no confident ensemble member")]
    EmptyConfidentSet,
    #[error("answer set contains a single class")]
    SingleClass,
    #[error("answer set contains no positive trials")]
    NoPositives,
    #[error("answer set is empty")]
    EmptyAnswers,
    #[error("corpus too small: {0}")]
    CorpusTooSmall(String),
    #[error("pair quota infeasible: {0}")]
    QuotaInfeasible(String),
    #[error("{path}:{line}: malformed record: {message}")]
    MalformedRecord {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("invalid answer: {0}")]
    InvalidAnswer(String),
    #[error("id mismatch: {0}")]
    IdMismatch(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite loss in {component} at epoch {epoch}, batch {batch}")]
    NonFiniteLoss {
        component: &'static str,
        epoch: usize,
        batch: usize,
    },
    #[error("epsilon grid is empty")]
    EmptyGrid,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn dims(context: &'static str, expected: usize, actual: usize) -> Self {
        Error::DimensionMismatch {
            context,
            expected,
            actual,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors in how the program was invoked or configured.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::InvalidConfig(_)
                | Error::InvalidHyperparam(_)
                | Error::InvalidThresholds { .. }
                | Error::InvalidEpsilon(_)
                | Error::EvenEnsemble(_)
                | Error::EmptyGrid
        )
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NonFiniteLoss { .. } | Error::NotPositiveDefinite(_)
        )
    }
}

pub(crate) fn check_dim(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::dims(context, expected, actual))
    }
}
