use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("mesh error: {0}")]
    Mesh(String),

    #[error("non-finite value at vertex {vertex}")]
    NonFinite { vertex: usize },

    #[error("{what} did not converge after {iterations} iterations (last residual {last:.3e})")]
    NotConverged { what: &'static str, iterations: usize, last: f64, history: Vec<f64> },

    #[error("linear solver failed: {0}")]
    Linear(String),

    #[error("inapplicable: {0}")]
    Inapplicable(String),

    #[error("check refused: {0}")]
    Refused(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn mesh(msg: impl Into<String>) -> Self {
        Error::Mesh(msg.into())
    }
}
