use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A value outside its valid domain, e.g. a joint angle beyond its bounds.
    #[error("domain error: {0}")]
    Domain(String),

    /// Collinear points, zero-length segments and similar.
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    /// An aggregate over data that has no usable samples.
    #[error("empty result: {0}")]
    EmptyResult(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// Inputs that break a documented precondition (misaligned tick grids, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("malformed data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn degenerate(msg: impl Into<String>) -> Self {
        Error::DegenerateGeometry(msg.into())
    }

    pub(crate) fn empty(msg: impl Into<String>) -> Self {
        Error::EmptyResult(msg.into())
    }
}
