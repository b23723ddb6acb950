use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad argument shape or range (indices, lengths, mismatched registers).
    #[error("invalid argument: {0}")]
    Argument(String),

    /// An operation's precondition on its input state or matrix does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// The quantity is mathematically undefined at this point.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    /// A configured size cap would be exceeded.
    #[error("resource limit: {0}")]
    Resource(String),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn pre(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }
}
