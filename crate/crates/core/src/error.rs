use std::path::PathBuf;

/// Errors produced by the engine.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller passed a value outside an operation's domain.
    #[error("rejected input: {0}")]
    InvalidInput(String),

    /// The CPG state left the finite range.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Surrogate dynamics produced a non-finite pose.
    #[error("simulation failed at control tick {tick}: {reason}")]
    Simulation { tick: usize, reason: String },

    /// Learning or evaluation of one individual failed inside a run.
    #[error("generation {generation}, individual {individual}: {source}")]
    Individual {
        generation: usize,
        individual: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error in {path}: {reason}")]
    Parse { path: PathBuf, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
