//! Trace-driven DRAM latency simulator and mechanism library.
//!
//! The crate models a DRAM system at command level and layers three
//! low-latency mechanisms on top of it:
//!
//! * [`tldram`] and [`policies`]: a bitline split into a fast near segment and
//!   a slow far segment, with near-segment caching policies.
//! * [`aldram`]: per-temperature timing tables identified by profiling and
//!   enforced online.
//! * [`ava`]: profiling restricted to the architecturally slowest cells, with
//!   SECDED and burst shuffling absorbing residual errors.
//!
//! [`variation`] supplies a seeded per-cell ground truth for all profiling,
//! [`harness`] emulates the read/write test methodology against it, and
//! [`sim`] runs traces through an FR-FCFS controller.

pub mod aldram;
pub mod ava;
pub mod dram;
pub mod error;
pub mod exec;
pub mod harness;
pub mod policies;
pub mod presets;
pub mod sim;
pub mod tldram;
pub mod variation;

pub use error::{Error, Result};
pub use exec::Exec;
