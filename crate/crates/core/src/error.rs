use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure class, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Input,
    Identification,
    Numerical,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("experience {t} is outside the horizon 0..={horizon}")]
    OutOfHorizon { t: usize, horizon: usize },
    #[error("unsupported configuration: {0}")]
    Unsupported(String),
    #[error("degenerate model: {0}")]
    DegenerateModel(String),
    #[error("instrument relevance failure: {0}")]
    Relevance(String),
    #[error("weak instrument: {0}")]
    WeakInstrument(String),
    #[error("not identified: {0}")]
    Unidentified(String),
    #[error("identifying assumption rejected: {0}")]
    AssumptionRejected(String),
    #[error("rank deficient design: {0}")]
    RankDeficient(String),
    #[error("numerically unstable: {0}")]
    Unstable(String),
    #[error("no root in bracket: {0}")]
    NoSolution(String),
    #[error("no convergence after {iterations} iterations (last rss {rss:e})")]
    NonConvergence {
        iterations: usize,
        rss: f64,
        last: Box<crate::estimate::JointFit>,
    },
    #[error("malformed panel file: {0}")]
    Parse(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidParameter(_)
            | Error::InvalidInput(_)
            | Error::OutOfHorizon { .. }
            | Error::Unsupported(_)
            | Error::Parse(_) => ErrorKind::Input,
            Error::DegenerateModel(_)
            | Error::Relevance(_)
            | Error::WeakInstrument(_)
            | Error::Unidentified(_)
            | Error::AssumptionRejected(_) => ErrorKind::Identification,
            Error::RankDeficient(_)
            | Error::Unstable(_)
            | Error::NoSolution(_)
            | Error::NonConvergence { .. } => ErrorKind::Numerical,
            Error::Csv(_) | Error::Io(_) => ErrorKind::Io,
        }
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
