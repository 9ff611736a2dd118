//! Configuration, protocol registry and result persistence.

pub mod checkpoint;
pub mod config;
pub mod csv;
pub mod protocols;

use thiserror::Error;

pub use checkpoint::{Checkpoint, ParamArray, CHECKPOINT_VERSION};
pub use config::{OptimizeSection, ProtocolRef, RunConfig, SweepSection, SystemSection};
pub use csv::{
    format_sig, write_learning_curve, write_runs, write_sweep, write_trajectory, SIG_DIGITS,
};
pub use protocols::{builtin_protocols, lookup_protocol, resolve_protocol, PROTOCOL_NAMES};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unknown protocol {name:?}; valid names: {valid}")]
    UnknownProtocol { name: String, valid: String },
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl IoError {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Self::Io {
            context: context.into(),
            source,
        }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Self::Json {
            context: context.into(),
            source,
        }
    }
}
