use thiserror::Error;

use crate::dram::CommandKind;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("address {addr:#x} outside capacity {capacity:#x}")]
    Address { addr: u64, capacity: u64 },

    #[error("illegal command {kind:?}: {reason}")]
    IllegalCommand { kind: CommandKind, reason: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("transfer error: {0}")]
    Transfer(String),

    #[error("trace error at line {line}: {reason}")]
    Trace { line: usize, reason: String },

    #[error("module rejected: {0}")]
    ModuleRejected(String),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
