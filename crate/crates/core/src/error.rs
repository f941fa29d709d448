use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The truncated index range does not show the per-index ratio settling,
    /// so the supremum over all indices cannot be certified.
    #[error("cannot certify supremum of {what}: partial max {partial_max} at index {argmax}")]
    CertificationFailure {
        what: String,
        partial_max: f64,
        argmax: usize,
    },

    #[error("unsupported cost shape: {0}")]
    UnsupportedShape(&'static str),

    /// Malformed input file; `line` is one-based.
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("numeric failure: {0}")]
    NumericFailure(String),

    #[error("transport solver failure: {0}")]
    SolverFailure(String),

    #[error("universal constant violated at lambda = {lambda}: {detail}")]
    ConstantViolation { lambda: f64, detail: String },

    /// The two independent evaluation routes of a Stein factor disagree.
    #[error("{what} routes disagree at i = {index}: {recursion} vs {closed_form}")]
    RouteDisagreement {
        what: &'static str,
        index: usize,
        recursion: f64,
        closed_form: f64,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
