use serde::{Deserialize, Serialize};

use super::address::Address;
use super::timing::{CycleTimings, Cycle};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CommandKind {
    Act,
    Rd,
    Wr,
    Pre,
    Ref,
    /// Inter-segment row copy: while the source row is latched in the sense
    /// amplifiers, a second activation drives it into the destination row.
    Transfer,
}

impl CommandKind {
    pub fn mnemonic(self) -> &'static str {
        match self {
            CommandKind::Act => "ACT",
            CommandKind::Rd => "RD",
            CommandKind::Wr => "WR",
            CommandKind::Pre => "PRE",
            CommandKind::Ref => "REF",
            CommandKind::Transfer => "TRANSFER",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Command {
    pub kind: CommandKind,
    pub addr: Address,
    pub issue: Cycle,
    /// Occupancy of REF (tRFC) or the destination write of a TRANSFER.
    pub duration: Cycle,
    /// Latency tier of the target row (0 = near or unsegmented).
    pub tier: u8,
}

impl Command {
    pub fn new(kind: CommandKind, addr: Address, issue: Cycle) -> Self {
        Command { kind, addr, issue, duration: 0, tier: 0 }
    }

    pub fn with_duration(mut self, d: Cycle) -> Self {
        self.duration = d;
        self
    }

    pub fn with_tier(mut self, tier: u8) -> Self {
        self.tier = tier;
        self
    }

    /// Physical row within the subarray this command targets.
    pub fn row(&self) -> u32 {
        self.addr.row_internal
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BankStatus {
    Precharged,
    Activating,
    Activated,
    Precharging,
}

/// Per-bank command state. Commands are applied in issue order; the
/// transient `Activating`/`Precharging` phases are derived from timestamps by
/// [`BankState::status_at`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BankState {
    open: bool,
    open_row: Option<u32>,
    open_subarray: Option<u32>,
    open_tier: Option<u8>,
    last_act: Option<Cycle>,
    last_pre: Option<Cycle>,
    last_col: Option<Cycle>,
    /// Timings of the most recent activation (segment-dependent).
    act_t: Option<CycleTimings>,
    /// Earliest PRE imposed by write recovery or transfers.
    pre_ready: Cycle,
    busy_until: Cycle,
}

impl Default for BankState {
    fn default() -> Self {
        BankState {
            open: false,
            open_row: None,
            open_subarray: None,
            open_tier: None,
            last_act: None,
            last_pre: None,
            last_col: None,
            act_t: None,
            pre_ready: 0,
            busy_until: 0,
        }
    }
}

impl BankState {
    pub fn open_row(&self) -> Option<(u32, u32)> {
        match (self.open_subarray, self.open_row) {
            (Some(s), Some(r)) => Some((s, r)),
            _ => None,
        }
    }

    pub fn open_tier(&self) -> Option<u8> {
        self.open_tier
    }

    pub fn last_act(&self) -> Option<Cycle> {
        self.last_act
    }

    pub fn last_pre(&self) -> Option<Cycle> {
        self.last_pre
    }

    pub fn activation_timings(&self) -> Option<&CycleTimings> {
        self.act_t.as_ref()
    }

    pub fn is_open(&self) -> bool {
        self.open
    }

    pub fn status_at(&self, now: Cycle) -> BankStatus {
        let t = self.act_t;
        match (self.open, t) {
            (true, Some(t)) => {
                if now < self.last_act.unwrap_or(0) + t.trcd {
                    BankStatus::Activating
                } else {
                    BankStatus::Activated
                }
            }
            (false, Some(t)) => match self.last_pre {
                Some(p) if now < p + t.trp => BankStatus::Precharging,
                _ => BankStatus::Precharged,
            },
            _ => BankStatus::Precharged,
        }
    }

    fn illegal(kind: CommandKind, reason: impl Into<String>) -> Error {
        Error::IllegalCommand { kind, reason: reason.into() }
    }

    /// Earliest cycle `>= now` at which `cmd` may issue. `t` is the timing set
    /// of the row `cmd` targets (its segment).
    pub fn earliest_legal_time(&self, cmd: &Command, t: &CycleTimings, now: Cycle) -> Result<Cycle> {
        let mut at = now.max(self.busy_until);
        match cmd.kind {
            CommandKind::Act | CommandKind::Ref => {
                if self.open {
                    return Err(Self::illegal(cmd.kind, "bank has an open row"));
                }
                if let Some(prev) = self.act_t {
                    if let Some(p) = self.last_pre {
                        at = at.max(p + prev.trp);
                    }
                    if let Some(a) = self.last_act {
                        at = at.max(a + prev.trc());
                    }
                }
            }
            CommandKind::Rd | CommandKind::Wr | CommandKind::Transfer => {
                if !self.open {
                    return Err(Self::illegal(cmd.kind, "bank is precharged"));
                }
                if cmd.kind != CommandKind::Transfer
                    && self.open_row() != Some((cmd.addr.subarray, cmd.row()))
                {
                    return Err(Self::illegal(cmd.kind, "row is not open"));
                }
                let a = self.last_act.expect("open bank has an activation");
                at = at.max(a + self.act_t.map_or(t.trcd, |x| x.trcd));
            }
            CommandKind::Pre => {
                if !self.open {
                    return Err(Self::illegal(cmd.kind, "bank is already precharged"));
                }
                let a = self.last_act.expect("open bank has an activation");
                let tras = self.act_t.map_or(t.tras, |x| x.tras);
                at = at.max(a + tras).max(self.pre_ready);
                if let Some(c) = self.last_col {
                    at = at.max(c);
                }
            }
        }
        Ok(at)
    }

    /// State after issuing `cmd` with target timings `t`. The caller is
    /// responsible for issuing at a legal time; ordering violations that can
    /// be detected from the state alone are rejected.
    pub fn apply_command(&self, cmd: &Command, t: &CycleTimings) -> Result<BankState> {
        let legal = self.earliest_legal_time(cmd, t, 0)?;
        if cmd.issue < legal {
            return Err(Self::illegal(
                cmd.kind,
                format!("issued at {} before earliest legal cycle {legal}", cmd.issue),
            ));
        }
        let mut s = *self;
        match cmd.kind {
            CommandKind::Act => {
                s.open = true;
                s.open_row = Some(cmd.row());
                s.open_subarray = Some(cmd.addr.subarray);
                s.open_tier = Some(cmd.tier);
                s.last_act = Some(cmd.issue);
                s.last_col = None;
                s.act_t = Some(*t);
                s.pre_ready = cmd.issue;
            }
            CommandKind::Rd => {
                s.last_col = Some(cmd.issue);
            }
            CommandKind::Wr => {
                let act = s.act_t.unwrap_or(*t);
                s.last_col = Some(cmd.issue);
                s.pre_ready = s.pre_ready.max(cmd.issue + act.tcwl + act.tbl + act.twr);
            }
            CommandKind::Transfer => {
                // Restoring the destination keeps the wider bitline connected,
                // so the slower of the two segment timings governs PRE.
                s.act_t = Some(s.act_t.map_or(*t, |a| a.max(t)));
                s.pre_ready = s.pre_ready.max(cmd.issue + cmd.duration);
            }
            CommandKind::Pre => {
                s.open = false;
                s.open_row = None;
                s.open_subarray = None;
                s.open_tier = None;
                s.last_pre = Some(cmd.issue);
            }
            CommandKind::Ref => {
                s.busy_until = cmd.issue + cmd.duration;
            }
        }
        Ok(s)
    }
}
