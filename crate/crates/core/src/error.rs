use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation's precondition (shape mismatch, bad range, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A dataset record or knowledge graph could not be turned into a graph.
    #[error("ingestion error: {0}")]
    Ingest(String),

    /// Training produced a NaN or infinite loss.
    #[error("non-finite loss {value} in batch {batch}")]
    NonFiniteLoss { batch: usize, value: f64 },

    /// A file had the wrong layout (checkpoint, config, vocabulary, CSV ...).
    #[error("format error: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for command line front ends: 1 for contract
    /// violations, 2 for anything that went wrong reading or writing files.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Contract(_) | Error::Ingest(_) | Error::NonFiniteLoss { .. } => 1,
            Error::Format(_) | Error::Io(_) => 2,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

macro_rules! contract {
    ($cond:expr, $($arg:tt)+) => {
        if !$cond {
            return Err($crate::error::Error::Contract(format!($($arg)+)));
        }
    };
}
pub(crate) use contract;
