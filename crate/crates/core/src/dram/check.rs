//! Offline legality checker for recorded command logs.
//!
//! Deliberately independent of [`BankState`](super::BankState): it replays a
//! log per bank and checks the pairwise constraints directly.

use std::collections::BTreeMap;

use super::bank::{Command, CommandKind};
use super::timing::{Cycle, CycleTimings};

/// One issued command together with the timing set of its target row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoggedCommand {
    pub bank: usize,
    pub cmd: Command,
    pub timings: CycleTimings,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub bank: usize,
    pub index: usize,
    pub what: String,
}

#[derive(Default)]
struct Track {
    act: Option<(Cycle, CycleTimings)>,
    pre: Option<(Cycle, CycleTimings)>,
    prev_act: Option<(Cycle, CycleTimings)>,
    pre_floor: Cycle,
    busy_until: Cycle,
}

/// Check tRCD (ACT->RD/WR), tRAS (ACT->PRE), tRP (PRE->ACT), tRC (ACT->ACT)
/// and tWR (write data->PRE) on every bank of `log`.
pub fn check_log(log: &[LoggedCommand]) -> Result<(), Violation> {
    let mut banks: BTreeMap<usize, Track> = BTreeMap::new();
    for (i, lc) in log.iter().enumerate() {
        let tr = banks.entry(lc.bank).or_default();
        let t = lc.cmd.issue;
        let fail = |what: String| Err(Violation { bank: lc.bank, index: i, what });
        if t < tr.busy_until && lc.cmd.kind != CommandKind::Pre {
            return fail(format!("{:?} at {t} during refresh until {}", lc.cmd.kind, tr.busy_until));
        }
        match lc.cmd.kind {
            CommandKind::Act | CommandKind::Ref => {
                if tr.act.is_some() {
                    return fail(format!("{:?} at {t} with an open row", lc.cmd.kind));
                }
                if let Some((a, at)) = tr.prev_act {
                    if t < a + at.trc() {
                        return fail(format!("tRC: {:?} at {t}, previous ACT at {a}, tRC {}", lc.cmd.kind, at.trc()));
                    }
                }
                if let Some((p, pt)) = tr.pre {
                    if t < p + pt.trp {
                        return fail(format!("tRP: {:?} at {t}, PRE at {p}, tRP {}", lc.cmd.kind, pt.trp));
                    }
                }
                if lc.cmd.kind == CommandKind::Act {
                    tr.act = Some((t, lc.timings));
                    tr.pre_floor = t;
                } else {
                    tr.busy_until = t + lc.cmd.duration;
                }
            }
            CommandKind::Rd | CommandKind::Wr | CommandKind::Transfer => {
                let Some((a, at)) = tr.act else {
                    return fail(format!("{:?} at {t} to a precharged bank", lc.cmd.kind));
                };
                if t < a + at.trcd {
                    return fail(format!("tRCD: {:?} at {t}, ACT at {a}, tRCD {}", lc.cmd.kind, at.trcd));
                }
                match lc.cmd.kind {
                    CommandKind::Wr => {
                        tr.pre_floor = tr.pre_floor.max(t + at.tcwl + at.tbl + at.twr);
                    }
                    CommandKind::Transfer => {
                        tr.pre_floor = tr.pre_floor.max(t + lc.cmd.duration);
                        tr.act = Some((a, at.max(&lc.timings)));
                    }
                    _ => tr.pre_floor = tr.pre_floor.max(t),
                }
            }
            CommandKind::Pre => {
                let Some((a, at)) = tr.act.take() else {
                    return fail(format!("PRE at {t} to a precharged bank"));
                };
                if t < a + at.tras {
                    return fail(format!("tRAS: PRE at {t}, ACT at {a}, tRAS {}", at.tras));
                }
                if t < tr.pre_floor {
                    return fail(format!("tWR/transfer: PRE at {t} before {}", tr.pre_floor));
                }
                tr.pre = Some((t, at));
                tr.prev_act = Some((a, at));
            }
        }
    }
    Ok(())
}
