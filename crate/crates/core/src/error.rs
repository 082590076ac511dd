use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("quadrature failure: {0}")]
    Quadrature(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("did not converge: {0}")]
    NotConverged(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
