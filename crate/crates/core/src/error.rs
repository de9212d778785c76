use std::path::PathBuf;

use thiserror::Error;

use crate::graph::NodeId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the operation's domain (negative load, empty split, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Netlist or graph structure violates an invariant.
    #[error("structural error: {0}")]
    Structural(String),

    #[error("cycle detected: back-edge {from} -> {to}")]
    Cycle { from: NodeId, to: NodeId },

    #[error("library error: {0}")]
    Library(String),

    /// Two artifacts that must describe the same object disagree.
    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("fingerprint mismatch for {what}: expected {expected}, found {found}")]
    Fingerprint {
        what: String,
        expected: String,
        found: String,
    },

    #[error("non-finite value encountered: {0}")]
    Numeric(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
