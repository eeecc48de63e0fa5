use std::fmt;
use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A duration in integer picoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Ps(pub u64);

/// Controller clock cycles.
pub type Cycle = u64;

impl Ps {
    pub const ZERO: Ps = Ps(0);

    /// Nearest picosecond to `ns` nanoseconds.
    pub fn from_ns(ns: f64) -> Ps {
        assert!(ns >= 0.0 && ns.is_finite(), "negative or non-finite duration {ns}");
        Ps((ns * 1000.0).round() as u64)
    }

    pub fn as_ns(self) -> f64 {
        self.0 as f64 / 1000.0
    }

    pub fn cycles(self, clock: Ps) -> Cycle {
        ps_to_cycles(self, clock)
    }

    pub fn max(self, other: Ps) -> Ps {
        Ps(self.0.max(other.0))
    }
}

impl Add for Ps {
    type Output = Ps;
    fn add(self, rhs: Ps) -> Ps {
        Ps(self.0 + rhs.0)
    }
}

impl Sub for Ps {
    type Output = Ps;
    fn sub(self, rhs: Ps) -> Ps {
        Ps(self.0.saturating_sub(rhs.0))
    }
}

impl fmt::Display for Ps {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ns", self.as_ns())
    }
}

/// Ceiling conversion of a duration to controller cycles.
pub fn ps_to_cycles(d: Ps, clock_period: Ps) -> Cycle {
    assert!(clock_period.0 > 0, "clock period must be positive");
    d.0.div_ceil(clock_period.0)
}

/// The four timing parameters that profiling reduces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Param {
    Trcd,
    Tras,
    Twr,
    Trp,
}

impl Param {
    pub const ALL: [Param; 4] = [Param::Trcd, Param::Tras, Param::Twr, Param::Trp];

    pub fn name(self) -> &'static str {
        match self {
            Param::Trcd => "trcd",
            Param::Tras => "tras",
            Param::Twr => "twr",
            Param::Trp => "trp",
        }
    }
}

/// DRAM timing-constraint vector. `trc` is always `tras + trp`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "TimingNs", into = "TimingNs")]
pub struct TimingParams {
    trcd: Ps,
    tras: Ps,
    trp: Ps,
    twr: Ps,
    trc: Ps,
    tcl: Ps,
    tcwl: Ps,
    tbl: Ps,
}

impl TimingParams {
    pub fn new(trcd: Ps, tras: Ps, trp: Ps, twr: Ps, tcl: Ps, tcwl: Ps, tbl: Ps) -> Result<Self> {
        let t = TimingParams { trcd, tras, trp, twr, trc: tras + trp, tcl, tcwl, tbl };
        t.validate()?;
        Ok(t)
    }

    /// Construct from a full vector including an explicit `trc`, rejecting
    /// vectors where `trc != tras + trp`.
    #[allow(clippy::too_many_arguments)]
    pub fn with_trc(
        trcd: Ps,
        tras: Ps,
        trp: Ps,
        twr: Ps,
        trc: Ps,
        tcl: Ps,
        tcwl: Ps,
        tbl: Ps,
    ) -> Result<Self> {
        if trc != tras + trp {
            return Err(Error::config(format!("tRC {trc} != tRAS {tras} + tRP {trp}")));
        }
        Self::new(trcd, tras, trp, twr, tcl, tcwl, tbl)
    }

    fn validate(&self) -> Result<()> {
        let all = [self.trcd, self.tras, self.trp, self.twr, self.tcl, self.tcwl, self.tbl];
        if all.iter().any(|p| p.0 == 0) {
            return Err(Error::config("timing parameters must be positive"));
        }
        Ok(())
    }

    /// DDR3-1066 datasheet values (1875 ps clock).
    pub fn ddr3_1066() -> Self {
        TimingParams::new(
            Ps(15_000),
            Ps(37_500),
            Ps(15_000),
            Ps(15_000),
            Ps(15_000),
            Ps(11_250),
            Ps(7_500),
        )
        .expect("valid preset")
    }

    /// DDR3-1600 datasheet values (1250 ps clock).
    pub fn ddr3_1600() -> Self {
        TimingParams::new(
            Ps(13_750),
            Ps(35_000),
            Ps(13_750),
            Ps(15_000),
            Ps(13_750),
            Ps(10_000),
            Ps(5_000),
        )
        .expect("valid preset")
    }

    pub fn trcd(&self) -> Ps {
        self.trcd
    }
    pub fn tras(&self) -> Ps {
        self.tras
    }
    pub fn trp(&self) -> Ps {
        self.trp
    }
    pub fn twr(&self) -> Ps {
        self.twr
    }
    pub fn trc(&self) -> Ps {
        self.trc
    }
    pub fn tcl(&self) -> Ps {
        self.tcl
    }
    pub fn tcwl(&self) -> Ps {
        self.tcwl
    }
    pub fn tbl(&self) -> Ps {
        self.tbl
    }

    pub fn get(&self, p: Param) -> Ps {
        match p {
            Param::Trcd => self.trcd,
            Param::Tras => self.tras,
            Param::Twr => self.twr,
            Param::Trp => self.trp,
        }
    }

    /// Copy with one of the reducible parameters replaced.
    pub fn with(mut self, p: Param, v: Ps) -> Self {
        assert!(v.0 > 0, "timing parameters must be positive");
        match p {
            Param::Trcd => self.trcd = v,
            Param::Tras => self.tras = v,
            Param::Twr => self.twr = v,
            Param::Trp => self.trp = v,
        }
        self.trc = self.tras + self.trp;
        self
    }

    /// Copy with tRCD/tRAS/tWR/tRP replaced.
    pub fn with_core(self, trcd: Ps, tras: Ps, twr: Ps, trp: Ps) -> Self {
        self.with(Param::Trcd, trcd)
            .with(Param::Tras, tras)
            .with(Param::Twr, twr)
            .with(Param::Trp, trp)
    }

    /// Copy with activation-side values replaced, keeping the tRAS/tRP split.
    pub fn with_row_cycle(self, trcd: Ps, tras: Ps, trp: Ps) -> Self {
        self.with(Param::Trcd, trcd).with(Param::Tras, tras).with(Param::Trp, trp)
    }

    /// `true` if every reducible parameter is `<=` the other's.
    pub fn core_le(&self, other: &TimingParams) -> bool {
        Param::ALL.iter().all(|&p| self.get(p) <= other.get(p))
    }

    pub fn core_max(&self, other: &TimingParams) -> TimingParams {
        let mut out = *self;
        for p in Param::ALL {
            out = out.with(p, self.get(p).max(other.get(p)));
        }
        out
    }

    /// tRCD + tRAS + tRP.
    pub fn read_sum(&self) -> Ps {
        self.trcd + self.tras + self.trp
    }

    /// tRCD + tWR + tRP.
    pub fn write_sum(&self) -> Ps {
        self.trcd + self.twr + self.trp
    }

    pub fn cycles(&self, clock: Ps) -> CycleTimings {
        let c = |p: Ps| ps_to_cycles(p, clock);
        CycleTimings {
            trcd: c(self.trcd),
            tras: c(self.tras),
            trp: c(self.trp),
            twr: c(self.twr),
            tcl: c(self.tcl),
            tcwl: c(self.tcwl),
            tbl: c(self.tbl),
        }
    }
}

/// Serialized form of [`TimingParams`], in nanoseconds. `trc_ns` is optional
/// and checked against `tras_ns + trp_ns` when present.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingNs {
    pub trcd_ns: f64,
    pub tras_ns: f64,
    pub trp_ns: f64,
    pub twr_ns: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trc_ns: Option<f64>,
    pub tcl_ns: f64,
    pub tcwl_ns: f64,
    pub tbl_ns: f64,
}

impl TryFrom<TimingNs> for TimingParams {
    type Error = Error;
    fn try_from(v: TimingNs) -> Result<Self> {
        let vals = [v.trcd_ns, v.tras_ns, v.trp_ns, v.twr_ns, v.tcl_ns, v.tcwl_ns, v.tbl_ns];
        if vals.iter().chain(v.trc_ns.iter()).any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::config("timing values must be finite and non-negative"));
        }
        let p = Ps::from_ns;
        let (tras, trp) = (p(v.tras_ns), p(v.trp_ns));
        let trc = v.trc_ns.map_or(tras + trp, p);
        TimingParams::with_trc(p(v.trcd_ns), tras, trp, p(v.twr_ns), trc, p(v.tcl_ns), p(v.tcwl_ns), p(v.tbl_ns))
    }
}

impl From<TimingParams> for TimingNs {
    fn from(t: TimingParams) -> Self {
        TimingNs {
            trcd_ns: t.trcd.as_ns(),
            tras_ns: t.tras.as_ns(),
            trp_ns: t.trp.as_ns(),
            twr_ns: t.twr.as_ns(),
            trc_ns: None,
            tcl_ns: t.tcl.as_ns(),
            tcwl_ns: t.tcwl.as_ns(),
            tbl_ns: t.tbl.as_ns(),
        }
    }
}

/// Timing parameters quantized to controller cycles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CycleTimings {
    pub trcd: Cycle,
    pub tras: Cycle,
    pub trp: Cycle,
    pub twr: Cycle,
    pub tcl: Cycle,
    pub tcwl: Cycle,
    pub tbl: Cycle,
}

impl CycleTimings {
    pub fn trc(&self) -> Cycle {
        self.tras + self.trp
    }

    /// Componentwise maximum; used when an activation spans two segments.
    pub fn max(&self, o: &CycleTimings) -> CycleTimings {
        CycleTimings {
            trcd: self.trcd.max(o.trcd),
            tras: self.tras.max(o.tras),
            trp: self.trp.max(o.trp),
            twr: self.twr.max(o.twr),
            tcl: self.tcl.max(o.tcl),
            tcwl: self.tcwl.max(o.tcwl),
            tbl: self.tbl.max(o.tbl),
        }
    }
}

/// Access latency as seen by the requester. Unloaded: tRCD + tCL + tBL.
/// Loaded (back-to-back row conflict in one subarray): tRC on top.
pub fn access_latency(loaded: bool, t: &TimingParams) -> Ps {
    let unloaded = t.trcd + t.tcl + t.tbl;
    if loaded {
        t.trc + unloaded
    } else {
        unloaded
    }
}

/// Unloaded access latency computed from raw components, allowing the
/// degenerate zero-valued constants that [`TimingParams`] rejects.
pub fn access_latency_raw(loaded: bool, trcd: Ps, tras: Ps, trp: Ps, tcl: Ps, tbl: Ps) -> Ps {
    let unloaded = trcd + tcl + tbl;
    if loaded {
        tras + trp + unloaded
    } else {
        unloaded
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cycle_conversion() {
        assert_eq!(ps_to_cycles(Ps(13_750), Ps(1_250)), 11);
        assert_eq!(ps_to_cycles(Ps(13_750), Ps(1_875)), 8);
        assert_eq!(ps_to_cycles(Ps(0), Ps(1_875)), 0);
    }

    #[test]
    fn trc_enforced() {
        let t = TimingParams::ddr3_1066();
        assert_eq!(t.trc(), Ps(52_500));
        let bad = TimingParams::with_trc(
            Ps(15_000),
            Ps(37_500),
            Ps(15_000),
            Ps(15_000),
            Ps(50_000),
            Ps(15_000),
            Ps(11_250),
            Ps(7_500),
        );
        assert!(bad.is_err());
        let ok = TimingParams::with_trc(
            Ps(15_000),
            Ps(37_500),
            Ps(15_000),
            Ps(15_000),
            Ps(52_500),
            Ps(15_000),
            Ps(11_250),
            Ps(7_500),
        );
        assert_eq!(ok.unwrap(), t);
        assert_eq!(t.with(Param::Tras, Ps(20_000)).trc(), Ps(35_000));
        assert!(TimingParams::new(Ps(0), Ps(1), Ps(1), Ps(1), Ps(1), Ps(1), Ps(1)).is_err());
    }

    #[test]
    fn ddr3_1066_latencies() {
        let t = TimingParams::ddr3_1066();
        assert_eq!(access_latency(false, &t), Ps(37_500));
        assert_eq!(access_latency(true, &t), Ps(90_000));
        let z = access_latency_raw(false, t.trcd(), t.tras(), t.trp(), Ps(0), Ps(0));
        assert_eq!(z, t.trcd());
    }

    #[test]
    fn ns_round_trip() {
        assert_eq!(Ps::from_ns(13.75), Ps(13_750));
        assert_eq!(Ps(23_750).as_ns(), 23.75);
    }
}
