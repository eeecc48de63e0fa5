//! Tiered-latency substrate: a subarray's bitline split by isolation
//! transistors into a short fast near segment and slower far segment(s).
//!
//! Physical rows are numbered from the sense amplifiers outwards: tier 0
//! occupies rows `0..tiers[0].rows`, tier 1 the next block, and so on.

use serde::{Deserialize, Serialize};

use crate::dram::{Address, Command, CommandKind, Cycle, CycleTimings, Ps, TimingParams, Topology};
use crate::error::{Error, Result};

/// Write time of the destination cell during a transfer.
pub const DEFAULT_TRANSFER_WRITE: Ps = Ps(4_000);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tier {
    pub rows: u32,
    pub timings: TimingParams,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentConfig {
    pub tiers: Vec<Tier>,
    /// Isolation transistor rows per subarray (2 for open bitlines).
    #[serde(default = "default_sets")]
    pub isolation_sets: u32,
    #[serde(default = "default_transfer")]
    pub transfer_write_ps: Ps,
}

fn default_sets() -> u32 {
    2
}

fn default_transfer() -> Ps {
    DEFAULT_TRANSFER_WRITE
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeriveMode {
    /// Only the published design points.
    #[default]
    Table,
    /// Piecewise-linear between anchor points.
    Interp,
}

// (near rows, tRCD ps, tRC ps) at a 512-row bitline with DDR3-1066 base.
const NEAR_ANCHORS: [(u32, u64, u64); 6] = [
    (1, 8_000, 22_000),
    (32, 8_200, 23_100),
    (128, 9_300, 27_800),
    (256, 11_000, 36_000),
    (384, 12_800, 44_500),
    (511, 14_900, 52_400),
];
const FAR_ANCHORS: [(u32, u64, u64); 6] = [
    (1, 12_000, 66_000),
    (32, 12_100, 65_800),
    (128, 13_200, 64_100),
    (256, 14_000, 62_000),
    (384, 14_600, 59_500),
    (511, 15_000, 56_000),
];
const ANCHOR_BITLINE: u32 = 512;
const ANCHOR_BASE_TRCD: u64 = 15_000;
const ANCHOR_BASE_TRC: u64 = 52_500;

/// Three-tier case: (rows, tRCD per mille, tRC per mille of base).
const THREE_TIER: [(u32, u64, u64); 3] = [(32, 548, 440), (224, 707, 778), (256, 1041, 1569)];

fn scale(v: u64, num: u64, den: u64) -> u64 {
    ((v as u128 * num as u128 + den as u128 / 2) / den as u128) as u64
}

/// Tier timings with the given tRCD and tRC; tRAS/tRP keep the base split and
/// tWR scales with tRAS.
fn tier_timings(base: &TimingParams, trcd: u64, trc: u64) -> TimingParams {
    let tras = scale(trc, base.tras().0, base.trc().0).max(1);
    let trp = trc.saturating_sub(tras).max(1);
    let twr = scale(base.twr().0, tras, base.tras().0).max(1);
    base.with_core(Ps(trcd.max(1)), Ps(tras), Ps(twr), Ps(trp))
}

fn interp(anchors: &[(u32, u64, u64)], x: f64) -> (u64, u64) {
    let i = anchors.iter().rposition(|a| a.0 as f64 <= x).unwrap_or(0).min(anchors.len() - 2);
    let (a, b) = (anchors[i], anchors[i + 1]);
    let f = ((x - a.0 as f64) / (b.0 - a.0) as f64).clamp(0.0, 1.0);
    let lerp = |p: u64, q: u64| (p as f64 + (q as f64 - p as f64) * f).round() as u64;
    (lerp(a.1, b.1), lerp(a.2, b.2))
}

/// Near/far configuration with `near_rows` of `rows_per_subarray` in the near
/// segment.
pub fn derive_segment_timings(near_rows: u32, rows_per_subarray: u32, base: &TimingParams, mode: DeriveMode) -> Result<SegmentConfig> {
    if near_rows == 0 || near_rows >= rows_per_subarray {
        return Err(Error::config(format!("near_rows {near_rows} must be in 1..{rows_per_subarray}")));
    }
    let rescale = |(trcd, trc): (u64, u64)| {
        tier_timings(base, scale(trcd, base.trcd().0, ANCHOR_BASE_TRCD), scale(trc, base.trc().0, ANCHOR_BASE_TRC))
    };
    let (near, far) = match mode {
        DeriveMode::Table => {
            if rows_per_subarray != ANCHOR_BITLINE {
                return Err(Error::config("table mode needs 512-row subarrays"));
            }
            let pick = |a: &[(u32, u64, u64)]| a.iter().find(|x| x.0 == near_rows).map(|x| (x.1, x.2));
            match (near_rows, pick(&NEAR_ANCHORS), pick(&FAR_ANCHORS)) {
                (32 | 128, Some(n), Some(f)) => (rescale(n), rescale(f)),
                _ => return Err(Error::config(format!("no published design point for near_rows {near_rows}; use interp mode"))),
            }
        }
        DeriveMode::Interp => {
            let x = near_rows as f64 * ANCHOR_BITLINE as f64 / rows_per_subarray as f64;
            (rescale(interp(&NEAR_ANCHORS, x)), rescale(interp(&FAR_ANCHORS, x)))
        }
    };
    SegmentConfig::new(
        vec![Tier { rows: near_rows, timings: near }, Tier { rows: rows_per_subarray - near_rows, timings: far }],
        rows_per_subarray,
    )
}

/// Multi-tier configuration. Table mode knows the 32/224/256 split.
pub fn derive_tiers(rows: &[u32], base: &TimingParams, mode: DeriveMode) -> Result<SegmentConfig> {
    let total: u32 = rows.iter().sum();
    match rows {
        [near, _] => derive_segment_timings(*near, total, base, mode),
        _ if mode == DeriveMode::Table && rows == THREE_TIER.map(|t| t.0) => {
            let tiers = THREE_TIER
                .iter()
                .map(|&(r, trcd, trc)| Tier {
                    rows: r,
                    timings: tier_timings(base, scale(base.trcd().0, trcd, 1000), scale(base.trc().0, trc, 1000)),
                })
                .collect();
            SegmentConfig::new(tiers, total)
        }
        _ => Err(Error::config(format!("no tier timings for split {rows:?}"))),
    }
}

impl SegmentConfig {
    pub fn new(tiers: Vec<Tier>, rows_per_subarray: u32) -> Result<Self> {
        let cfg = SegmentConfig { tiers, isolation_sets: 2, transfer_write_ps: DEFAULT_TRANSFER_WRITE };
        cfg.validate(rows_per_subarray)?;
        Ok(cfg)
    }

    /// A plain subarray: one tier, no isolation transistors.
    pub fn unsegmented(rows_per_subarray: u32, base: TimingParams) -> Self {
        SegmentConfig {
            tiers: vec![Tier { rows: rows_per_subarray, timings: base }],
            isolation_sets: 0,
            transfer_write_ps: DEFAULT_TRANSFER_WRITE,
        }
    }

    pub fn validate(&self, rows_per_subarray: u32) -> Result<()> {
        if self.tiers.is_empty() || self.tiers.iter().any(|t| t.rows == 0) {
            return Err(Error::config("every tier needs at least one row"));
        }
        let total: u32 = self.tiers.iter().map(|t| t.rows).sum();
        if total != rows_per_subarray {
            return Err(Error::config(format!("tier rows sum to {total}, subarray has {rows_per_subarray}")));
        }
        let near = self.tiers[0].timings.trcd();
        if self.tiers.iter().any(|t| t.timings.trcd() < near) {
            return Err(Error::config("near tier must have the smallest tRCD"));
        }
        if self.transfer_write_ps.0 == 0 {
            return Err(Error::config("transfer write time must be positive"));
        }
        Ok(())
    }

    pub fn is_segmented(&self) -> bool {
        self.tiers.len() > 1
    }

    pub fn near_rows(&self) -> u32 {
        self.tiers[0].rows
    }

    pub fn rows(&self) -> u32 {
        self.tiers.iter().map(|t| t.rows).sum()
    }

    pub fn near(&self) -> &TimingParams {
        &self.tiers[0].timings
    }

    pub fn far(&self) -> &TimingParams {
        &self.tiers[self.tiers.len() - 1].timings
    }

    /// Tier holding physical row `row`.
    pub fn tier_of_row(&self, row: u32) -> u8 {
        let mut start = 0;
        for (k, t) in self.tiers.iter().enumerate() {
            start += t.rows;
            if row < start {
                return k as u8;
            }
        }
        panic!("row {row} outside the segmented subarray");
    }

    pub fn timings_of_row(&self, row: u32) -> &TimingParams {
        &self.tiers[self.tier_of_row(row) as usize].timings
    }

    /// Number of rows between the sense amplifiers and the end of tier `k`.
    pub fn bitline_cells(&self, k: u8) -> u32 {
        self.tiers[..=k as usize].iter().map(|t| t.rows).sum()
    }
}

/// Area accounting for the isolation transistors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AreaReport {
    pub isolation_overhead_frac: f64,
    pub die_overhead_frac: f64,
    pub capacity_loss_frac: f64,
    /// Die overhead plus capacity lost to inclusive caching.
    pub total_overhead_frac: f64,
    /// Near-segment row-decoder wiring, reported separately.
    pub decoder_wiring_frac: f64,
}

/// Cell-equivalent height of one isolation transistor row.
pub const ISOLATION_HEIGHT: f64 = 11.5;
/// Cell-equivalent height of a sense-amplifier row.
pub const SENSE_AMP_HEIGHT: f64 = 115.2;
/// Fraction of die area scaled by subarray overhead, chosen so that two
/// isolation sets on 512-cell bitlines cost 3.15% of the die.
pub const ARRAY_TO_DIE: f64 = 0.0315 / (2.0 * ISOLATION_HEIGHT / (SENSE_AMP_HEIGHT + 512.0));
pub const DECODER_WIRING_FRAC: f64 = 0.0033;

pub fn area_overhead(cfg: &SegmentConfig, topo: &Topology) -> AreaReport {
    let iso = cfg.isolation_sets as f64 * ISOLATION_HEIGHT / (SENSE_AMP_HEIGHT + topo.cells_per_mat_side as f64);
    let die = iso * ARRAY_TO_DIE;
    let cap = if cfg.is_segmented() { (cfg.near_rows() as f64 / 2.0) / topo.rows_per_subarray as f64 } else { 0.0 };
    AreaReport {
        isolation_overhead_frac: iso,
        die_overhead_frac: die,
        capacity_loss_frac: cap,
        total_overhead_frac: die + cap,
        decoder_wiring_frac: if cfg.is_segmented() { DECODER_WIRING_FRAC } else { 0.0 },
    }
}

/// Normalized energy constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyModel {
    pub wordline: f64,
    pub bitline_full: f64,
    pub io: f64,
}

impl Default for EnergyModel {
    fn default() -> Self {
        EnergyModel { wordline: 1.0, bitline_full: 10.0, io: 2.0 }
    }
}

/// Energy of one command. ACT and PRE charge the bitline up to the target
/// tier; every isolation boundary crossed costs two wordline raises.
pub fn command_energy(cmd: &Command, cfg: &SegmentConfig, topo: &Topology) -> f64 {
    command_energy_with(&EnergyModel::default(), cmd, cfg, topo)
}

pub fn command_energy_with(e: &EnergyModel, cmd: &Command, cfg: &SegmentConfig, topo: &Topology) -> f64 {
    let full = cfg.rows() as f64;
    match cmd.kind {
        CommandKind::Act | CommandKind::Pre => {
            let k = cmd.tier.min(cfg.tiers.len() as u8 - 1);
            let frac = cfg.bitline_cells(k) as f64 / full;
            e.wordline + e.bitline_full * frac + 2.0 * e.wordline * k as f64
        }
        CommandKind::Rd | CommandKind::Wr => e.io,
        CommandKind::Transfer => e.wordline + e.bitline_full + 2.0 * e.wordline,
        CommandKind::Ref => topo.banks_per_rank as f64 * 2.0 * (e.wordline + e.bitline_full),
    }
}

/// Command schedule of a row copy within one subarray.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransferSchedule {
    /// ACT(src), TRANSFER(dst), PRE; empty when `src == dst`.
    pub commands: Vec<Command>,
    /// Timing set each command was issued against.
    pub timings: Vec<CycleTimings>,
    /// Bank cycles from the ACT until the next ACT may issue.
    pub occupancy: Cycle,
    /// Occupancy of the non-overlapped alternative (two full row cycles).
    pub serial: Cycle,
}

/// Copy `src` into `dst` starting at cycle `start` on a precharged bank. The
/// destination write overlaps the source's restoration: TRANSFER issues once
/// the source is sensed (tRCD), and PRE waits for whichever finishes last of
/// the restore (tRAS) and the destination write.
pub fn intersegment_transfer(src: &Address, dst: &Address, cfg: &SegmentConfig, clock: Ps, start: Cycle) -> Result<TransferSchedule> {
    if (src.channel, src.rank, src.bank, src.subarray) != (dst.channel, dst.rank, dst.bank, dst.subarray) {
        return Err(Error::Transfer(format!(
            "rows {} and {} are not on the same bitlines",
            src.row_internal, dst.row_internal
        )));
    }
    let rows = cfg.rows();
    if src.row_internal >= rows || dst.row_internal >= rows {
        return Err(Error::Transfer("row outside the subarray".into()));
    }
    if src.row_internal == dst.row_internal {
        return Ok(TransferSchedule { commands: vec![], timings: vec![], occupancy: 0, serial: 0 });
    }
    let (ts, td) = (cfg.tier_of_row(src.row_internal), cfg.tier_of_row(dst.row_internal));
    let s = cfg.tiers[ts as usize].timings.cycles(clock);
    let d = cfg.tiers[td as usize].timings.cycles(clock);
    let both = s.max(&d);
    let write = cfg.transfer_write_ps.cycles(clock);
    let act = Command::new(CommandKind::Act, *src, start).with_tier(ts);
    let xfer = Command::new(CommandKind::Transfer, *dst, start + s.trcd).with_duration(write).with_tier(td);
    let pre_at = start + both.tras.max(s.trcd + write);
    let pre = Command::new(CommandKind::Pre, *src, pre_at).with_tier(ts);
    Ok(TransferSchedule {
        commands: vec![act, xfer, pre],
        timings: vec![s, d, both],
        occupancy: pre_at - start + both.trp,
        serial: s.trc() + d.trc(),
    })
}

/// Replay a schedule on row contents: TRANSFER copies the open row into its
/// target row.
pub fn replay_contents(contents: &mut std::collections::BTreeMap<u32, u64>, commands: &[Command]) {
    let mut open = None;
    for c in commands {
        match c.kind {
            CommandKind::Act => open = Some(c.row()),
            CommandKind::Transfer => {
                let src = open.expect("transfer needs an open row");
                let v = contents.get(&src).copied().unwrap_or(0);
                contents.insert(c.row(), v);
            }
            CommandKind::Pre => open = None,
            _ => {}
        }
    }
}
