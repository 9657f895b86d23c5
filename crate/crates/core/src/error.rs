//! Crate-wide error type.
//!
//! Every fallible operation returns [`Result`]. Variants distinguish bad
//! arguments (caller mistakes), malformed data files (with the offending line
//! number), and remote-scorer failures, where [`Error::Transport`] is the one
//! class callers may sensibly retry.

use std::io;

/// Errors produced by this crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Underlying I/O failure while reading or writing an artifact.
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    /// A data file line that does not satisfy its format contract.
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },

    /// An argument outside its documented domain (empty input, bad range, …).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// JSON (de)serialization failure for a persisted artifact.
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    /// Network-level failure talking to a remote scorer. Retriable.
    #[error("transport error: {0}")]
    Transport(String),

    /// The remote scorer answered, but violated the scoring protocol.
    #[error("protocol error: {0}")]
    Protocol(String),

    /// Any of the above, annotated with where in a pipeline it happened.
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Convenience constructor for [`Error::Malformed`].
    pub fn malformed(line: usize, message: impl Into<String>) -> Self {
        Error::Malformed { line, message: message.into() }
    }

    /// Convenience constructor for [`Error::InvalidArgument`].
    pub fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidArgument(message.into())
    }

    /// Wraps the error with pipeline-position context.
    pub fn with_context(self, context: impl Into<String>) -> Self {
        Error::Context { context: context.into(), source: Box::new(self) }
    }

    /// True for failures that a caller may retry without changing the request.
    pub fn is_retriable(&self) -> bool {
        match self {
            Error::Transport(_) => true,
            Error::Context { source, .. } => source.is_retriable(),
            _ => false,
        }
    }
}

/// Crate-wide result alias.
pub type Result<T, E = Error> = std::result::Result<T, E>;
