use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument violates an operation's precondition (shape, range, arity).
    #[error("domain error: {0}")]
    Domain(String),
    /// An adapter or experiment configuration is infeasible or inconsistent.
    #[error("configuration error: {0}")]
    Config(String),
    /// A numerical routine failed (singular solve, non-finite value).
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}
