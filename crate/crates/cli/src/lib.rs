//! Front end of the `dramlat` binary: experiment configuration, command
//! implementations and the exit-code contract.

pub mod commands;
pub mod config;

use commands::OutputError;

/// Exit codes of the binary.
pub mod exit {
    pub const SUCCESS: u8 = 0;
    pub const OUTPUT: u8 = 1;
    pub const INPUT: u8 = 2;
    pub const RELIABILITY: u8 = 3;
    pub const MODULE_REJECTED: u8 = 4;
}

/// Exit code for a failed command.
pub fn exit_code(e: &anyhow::Error) -> u8 {
    let rejected = e.chain().any(|c| matches!(c.downcast_ref::<dramlat::Error>(), Some(dramlat::Error::ModuleRejected(_))));
    if rejected {
        exit::MODULE_REJECTED
    } else if e.chain().any(|c| c.is::<OutputError>()) {
        exit::OUTPUT
    } else {
        exit::INPUT
    }
}
