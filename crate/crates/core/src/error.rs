use std::path::PathBuf;

use thiserror::Error;

use crate::geom::AgentId;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is out of its allowed range.
    #[error("invalid `{field}`: {reason}")]
    Config { field: &'static str, reason: String },

    /// A configuration file could not be parsed.
    #[error("bad config file {path}: {message}")]
    ConfigFile { path: PathBuf, message: String },

    /// An estimate was requested for a slot earlier than the peer's last update.
    #[error("slot ordering violated: asked for slot {requested}, last update was slot {last_update}")]
    SlotOrder { requested: u64, last_update: u64 },

    #[error("unknown agent id {0}")]
    UnknownAgent(AgentId),

    /// A vector needed to define an angle has zero length.
    #[error("zero-length vector in {0}")]
    ZeroLength(&'static str),

    /// Two agents share the same (estimated) position.
    #[error("agents {0} and {1} coincide")]
    Coincident(AgentId, AgentId),

    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Config {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 2 for configuration problems, 3 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } | Error::Csv(_) | Error::Json(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
