//! Gateway node: classifies files arriving via a watched directory or a
//! length-prefixed wire protocol, and writes one verdict record per
//! submission.

pub mod classify;
pub mod serve;
pub mod verdict;
pub mod wire;

pub use classify::Classifier;
pub use serve::{read_verdict_log, serve, Gateway, GatewayConfig};
pub use verdict::Verdict;
pub use wire::{submit, submit_raw, WIRE_MAGIC};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error(transparent)]
    Core(#[from] binsight::Error),

    #[error("configuration: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("wire protocol: {0}")]
    Wire(String),
}

pub type Result<T> = std::result::Result<T, GatewayError>;
