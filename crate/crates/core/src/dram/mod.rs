//! DRAM organization, timing constraints, address decoding and the per-bank
//! command state machine.

mod address;
mod bank;
mod check;
mod timing;
mod topology;

pub use address::{Address, AddressMap, MappingScheme, RowMap};
pub use bank::{BankState, BankStatus, Command, CommandKind};
pub use check::{check_log, LoggedCommand, Violation};
pub use timing::{
    access_latency, access_latency_raw, ps_to_cycles, Cycle, CycleTimings, Param, Ps, TimingNs,
    TimingParams,
};
pub use topology::{Topology, CHIP_BITS_PER_ACCESS, LINE_BYTES};

/// Page policy applied after a column command.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowPolicy {
    Open,
    #[default]
    Closed,
}

/// Refresh defaults: all-bank REF, fixed tRFC, 8192 commands per window.
pub const DEFAULT_TRFC: Ps = Ps(160_000);
pub const REFRESH_COMMANDS_PER_WINDOW: u64 = 8192;
