//! Adaptive-Latency DRAM: per-temperature timing tables identified offline
//! against a module's worst cells, then enforced from a temperature trace.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::dram::{Param, Ps, TimingParams};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::variation::{ChipModel, Op, OpDigest, ProfileDigest};

/// Refresh interval every module must pass at standard timings.
pub const STANDARD_REFRESH_MS: f64 = 64.0;
/// Default table temperature points.
pub const DEFAULT_TEMPS_C: [f64; 5] = [45.0, 55.0, 65.0, 75.0, 85.0];
/// Default enforcement interval.
pub const DEFAULT_ENFORCE_INTERVAL_MS: u64 = 256;
/// Maximum plausible temperature slew; faster changes are reported.
pub const MAX_TEMP_RATE_C_PER_S: f64 = 0.1;

/// Refresh-interval sweep for [`find_safe_refresh_interval`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefreshSearch {
    pub temp_c: f64,
    pub step_ms: f64,
    pub max_ms: f64,
}

impl Default for RefreshSearch {
    fn default() -> Self {
        RefreshSearch { temp_c: 85.0, step_ms: 8.0, max_ms: 960.0 }
    }
}

/// Safe refresh intervals of a module, per test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SafeRefresh {
    pub safe_refresh_read_ms: f64,
    pub safe_refresh_write_ms: f64,
}

impl SafeRefresh {
    pub fn get(&self, op: Op) -> f64 {
        match op {
            Op::Read => self.safe_refresh_read_ms,
            Op::Write => self.safe_refresh_write_ms,
        }
    }
}

/// Longest refresh interval of the sweep `64, 64 + step, ...` at which the
/// digest passes with standard timings, minus one step of margin.
pub fn find_safe_refresh_interval(chip: &ChipModel, digest: &OpDigest, search: &RefreshSearch) -> Result<f64> {
    if !(search.step_ms > 0.0) || !(search.max_ms >= STANDARD_REFRESH_MS) {
        return Err(Error::Config("refresh search needs step > 0 and max >= 64 ms".into()));
    }
    let std = chip.standard();
    if !digest.passes(chip, std, search.temp_c, STANDARD_REFRESH_MS) {
        return Err(Error::ModuleRejected(format!(
            "{} test fails at {STANDARD_REFRESH_MS} ms with standard timings at {} degC",
            digest.op().name(),
            search.temp_c
        )));
    }
    let mut best = STANDARD_REFRESH_MS;
    let mut k = 1u32;
    loop {
        let r = STANDARD_REFRESH_MS + k as f64 * search.step_ms;
        if r > search.max_ms + 1e-9 || !digest.passes(chip, std, search.temp_c, r) {
            break;
        }
        best = r;
        k += 1;
    }
    Ok(best - search.step_ms)
}

/// Read and write safe refresh intervals of a module.
pub fn safe_refresh_intervals(chip: &ChipModel, digest: &ProfileDigest, search: &RefreshSearch) -> Result<SafeRefresh> {
    Ok(SafeRefresh {
        safe_refresh_read_ms: find_safe_refresh_interval(chip, &digest.read, search)?,
        safe_refresh_write_ms: find_safe_refresh_interval(chip, &digest.write, search)?,
    })
}

/// Candidate values per core parameter. Every combination is tested as a
/// whole.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimingGrid {
    values: [Vec<Ps>; 4],
}

impl TimingGrid {
    /// Values are indexed by [`Param`]; each list is sorted and deduplicated.
    pub fn new(trcd: Vec<Ps>, tras: Vec<Ps>, twr: Vec<Ps>, trp: Vec<Ps>) -> Result<Self> {
        let mut values = [trcd, tras, twr, trp];
        for (v, p) in values.iter_mut().zip(Param::ALL) {
            if v.is_empty() || v.contains(&Ps::ZERO) {
                return Err(Error::Config(format!("grid for {} must be non-empty and positive", p.name())));
            }
            v.sort();
            v.dedup();
        }
        Ok(TimingGrid { values })
    }

    /// Inclusive `lo..=hi` ranges in `step_ns` steps, plus the given
    /// standard value of each parameter.
    pub fn stepped(ranges: [(f64, f64); 4], step_ns: f64, standard: &TimingParams) -> Result<Self> {
        if !(step_ns > 0.0) {
            return Err(Error::config("grid step must be positive"));
        }
        let mut values: [Vec<Ps>; 4] = Default::default();
        for ((v, (lo, hi)), p) in values.iter_mut().zip(ranges).zip(Param::ALL) {
            let (lo, hi) = (lo.min(hi), lo.max(hi));
            let n = ((hi - lo) / step_ns + 1e-9).floor() as u32;
            v.extend((0..=n).map(|k| Ps::from_ns(lo + k as f64 * step_ns)));
            v.push(standard.get(p));
        }
        let [a, b, c, d] = values;
        Self::new(a, b, c, d)
    }

    /// The characterization ranges: tRCD 10-12.5, tRAS 20-35, tWR 5-15,
    /// tRP 10-12.5 ns in 1.25 ns steps, plus the standard values.
    pub fn aldram(standard: &TimingParams) -> Self {
        Self::stepped([(10.0, 12.5), (20.0, 35.0), (5.0, 15.0), (10.0, 12.5)], 1.25, standard).expect("static grid")
    }

    pub fn values(&self, p: Param) -> &[Ps] {
        &self.values[p as usize]
    }

    pub fn len(&self) -> usize {
        self.values.iter().map(Vec::len).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Combination `i` in row-major order over (tRCD, tRAS, tWR, tRP),
    /// applied on top of `base`.
    pub fn combo(&self, base: &TimingParams, mut i: usize) -> TimingParams {
        let mut pick = [Ps::ZERO; 4];
        for k in (0..4).rev() {
            let v = &self.values[k];
            pick[k] = v[i % v.len()];
            i /= v.len();
        }
        base.with_core(pick[0], pick[1], pick[2], pick[3])
    }

    pub fn combos<'a>(&'a self, base: &'a TimingParams) -> impl Iterator<Item = TimingParams> + 'a {
        (0..self.len()).map(move |i| self.combo(base, i))
    }
}

/// Ordering among error-free combinations: smallest core sum, then the
/// smallest tRP, tRCD, tRAS, tWR.
pub fn selection_key(t: &TimingParams) -> (Ps, Ps, Ps, Ps, Ps) {
    let sum = t.trcd() + t.tras() + t.twr() + t.trp();
    (sum, t.trp(), t.trcd(), t.tras(), t.twr())
}

/// Minimal error-free combination of `grid` (optionally bounded above by
/// `cap`), or `None` when nothing passes.
pub fn best_combo<F>(grid: &TimingGrid, base: &TimingParams, cap: Option<&TimingParams>, passes: F) -> Option<TimingParams>
where
    F: Fn(&TimingParams) -> bool,
{
    grid.combos(base)
        .filter(|t| cap.is_none_or(|c| t.core_le(c)))
        .filter(|t| passes(t))
        .min_by_key(selection_key)
}

/// One row of a [`TimingTable`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableEntry {
    pub temp_c: f64,
    pub timings: TimingParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTable {
    standard: TimingParams,
    provenance: SafeRefresh,
    #[serde(rename = "entry")]
    entries: Vec<TableEntry>,
}

/// Temperature-indexed timing sets of one module.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTable", into = "RawTable")]
pub struct TimingTable {
    standard: TimingParams,
    provenance: SafeRefresh,
    entries: Vec<TableEntry>,
}

impl TryFrom<RawTable> for TimingTable {
    type Error = Error;
    fn try_from(r: RawTable) -> Result<Self> {
        TimingTable::new(r.standard, r.provenance, r.entries)
    }
}

impl From<TimingTable> for RawTable {
    fn from(t: TimingTable) -> Self {
        RawTable { standard: t.standard, provenance: t.provenance, entries: t.entries }
    }
}

impl TimingTable {
    /// Entries must have strictly increasing finite temperatures and
    /// componentwise non-decreasing core timings.
    pub fn new(standard: TimingParams, provenance: SafeRefresh, entries: Vec<TableEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::config("timing table is empty"));
        }
        for w in entries.windows(2) {
            if !(w[0].temp_c < w[1].temp_c) {
                return Err(Error::Config(format!("table temperatures not increasing at {} degC", w[1].temp_c)));
            }
            if !w[0].timings.core_le(&w[1].timings) {
                return Err(Error::Config(format!(
                    "table timings decrease from {} to {} degC",
                    w[0].temp_c, w[1].temp_c
                )));
            }
        }
        if entries.iter().any(|e| !e.temp_c.is_finite()) {
            return Err(Error::config("table temperatures must be finite"));
        }
        Ok(TimingTable { standard, provenance, entries })
    }

    /// The DDR3-1600 table used for system evaluation: 10.0/23.75/10.0/11.25
    /// ns (tRCD/tRAS/tWR/tRP) up to 55 degC, standard timings up to 85 degC.
    pub fn ddr3_1600_reference() -> Self {
        let std = TimingParams::ddr3_1600();
        let fast = std.with_core(Ps(10_000), Ps(23_750), Ps(10_000), Ps(11_250));
        let prov = SafeRefresh { safe_refresh_read_ms: STANDARD_REFRESH_MS, safe_refresh_write_ms: STANDARD_REFRESH_MS };
        let entries = vec![TableEntry { temp_c: 55.0, timings: fast }, TableEntry { temp_c: 85.0, timings: std }];
        TimingTable::new(std, prov, entries).expect("static table")
    }

    pub fn standard(&self) -> &TimingParams {
        &self.standard
    }

    pub fn provenance(&self) -> &SafeRefresh {
        &self.provenance
    }

    pub fn entries(&self) -> &[TableEntry] {
        &self.entries
    }

    pub fn max_temp_c(&self) -> f64 {
        self.entries.last().map_or(f64::NEG_INFINITY, |e| e.temp_c)
    }

    /// Entry for the smallest table temperature at or above `temp_c`.
    pub fn lookup(&self, temp_c: f64) -> Option<&TableEntry> {
        self.entries.iter().find(|e| e.temp_c >= temp_c)
    }
}

/// Inputs of [`identify_timing_table`].
#[derive(Debug, Clone, PartialEq)]
pub struct Identify {
    pub temps_c: Vec<f64>,
    pub grid: TimingGrid,
    pub refresh: SafeRefresh,
}

/// Per temperature, the minimal-sum grid combination under which neither the
/// read nor the write digest fails at the module's safe refresh intervals.
/// Temperatures with no passing combination fall back to standard timings.
/// A cooler selection that is not below the next hotter one is re-searched
/// among combinations bounded by it.
pub fn identify_timing_table(chip: &ChipModel, digest: &ProfileDigest, cfg: &Identify, exec: Exec) -> Result<TimingTable> {
    let mut temps = cfg.temps_c.clone();
    if temps.is_empty() || temps.iter().any(|t| !t.is_finite()) {
        return Err(Error::config("identification needs finite temperature points"));
    }
    temps.sort_by(f64::total_cmp);
    temps.dedup();
    let std = *chip.standard();
    let passes = |t: &TimingParams, temp: f64| {
        digest.read.passes(chip, t, temp, cfg.refresh.safe_refresh_read_ms)
            && digest.write.passes(chip, t, temp, cfg.refresh.safe_refresh_write_ms)
    };
    let mut picked: Vec<TimingParams> = exec.map(temps.len(), |i| {
        let temp = temps[i];
        best_combo(&cfg.grid, &std, None, |t| passes(t, temp)).unwrap_or_else(|| {
            warn!("no error-free combination at {temp} degC; using standard timings");
            std
        })
    });
    for i in (0..picked.len().saturating_sub(1)).rev() {
        let hot = picked[i + 1];
        if !picked[i].core_le(&hot) {
            warn!("selection at {} degC exceeds the {} degC entry; re-searching below it", temps[i], temps[i + 1]);
            let temp = temps[i];
            picked[i] = best_combo(&cfg.grid, &std, Some(&hot), |t| passes(t, temp)).unwrap_or(hot);
        }
    }
    let entries = temps.iter().zip(picked).map(|(&temp_c, timings)| TableEntry { temp_c, timings }).collect();
    TimingTable::new(std, cfg.refresh, entries)
}

/// A temperature log of `(time_s, temp_c)` samples, held until the next one.
#[derive(Debug, Clone, PartialEq)]
pub struct TemperatureTrace {
    samples: Vec<(f64, f64)>,
}

/// A pair of consecutive samples changing faster than
/// [`MAX_TEMP_RATE_C_PER_S`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateViolation {
    pub index: usize,
    pub rate_c_per_s: f64,
}

impl TemperatureTrace {
    /// Samples need finite values and strictly increasing times.
    pub fn new(samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::config("temperature trace is empty"));
        }
        if samples.iter().any(|(t, c)| !t.is_finite() || !c.is_finite() || *t < 0.0) {
            return Err(Error::config("temperature samples must be finite with non-negative time"));
        }
        if samples.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::config("temperature sample times must increase"));
        }
        Ok(TemperatureTrace { samples })
    }

    pub fn constant(temp_c: f64, duration_s: f64) -> Result<Self> {
        if duration_s > 0.0 {
            Self::new(vec![(0.0, temp_c), (duration_s, temp_c)])
        } else {
            Self::new(vec![(0.0, temp_c)])
        }
    }

    /// Two columns, seconds and degC, separated by whitespace or a comma.
    /// Blank lines and `#` comments are skipped. Slew-rate violations are
    /// logged, not rejected.
    pub fn parse(text: &str) -> Result<Self> {
        let mut samples = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).collect();
            let err = |reason: String| Error::Trace { line: i + 1, reason };
            if cols.len() != 2 {
                return Err(err(format!("expected 2 columns, found {}", cols.len())));
            }
            let t: f64 = cols[0].parse().map_err(|_| err(format!("bad time {:?}", cols[0])))?;
            let c: f64 = cols[1].parse().map_err(|_| err(format!("bad temperature {:?}", cols[1])))?;
            if let Some(&(prev, _)) = samples.last() {
                if t <= prev {
                    return Err(err(format!("time {t} does not increase")));
                }
            }
            samples.push((t, c));
        }
        let trace = Self::new(samples)?;
        let v = trace.rate_violations();
        if let Some(first) = v.first() {
            warn!(
                "temperature trace changes faster than {MAX_TEMP_RATE_C_PER_S} degC/s at {} sample pair(s), first at sample {} ({:.3} degC/s)",
                v.len(),
                first.index,
                first.rate_c_per_s
            );
        }
        Ok(trace)
    }

    pub fn samples(&self) -> &[(f64, f64)] {
        &self.samples
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.0)
    }

    /// Temperature in force at `time_s` (the first sample before the trace
    /// starts).
    pub fn temp_at(&self, time_s: f64) -> f64 {
        let i = self.samples.partition_point(|s| s.0 <= time_s);
        self.samples[i.saturating_sub(1)].1
    }

    pub fn rate_violations(&self) -> Vec<RateViolation> {
        self.samples
            .windows(2)
            .enumerate()
            .filter_map(|(i, w)| {
                let rate = (w[1].1 - w[0].1).abs() / (w[1].0 - w[0].0);
                (rate > MAX_TEMP_RATE_C_PER_S + 1e-12).then_some(RateViolation { index: i + 1, rate_c_per_s: rate })
            })
            .collect()
    }
}

/// Timings in force over one enforcement interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AppliedStep {
    pub start_ms: u64,
    pub sampled_temp_c: f64,
    /// Table point used, `None` when above the hottest point.
    pub table_temp_c: Option<f64>,
    pub timings: TimingParams,
}

impl AppliedStep {
    pub fn over_limit(&self) -> bool {
        self.table_temp_c.is_none()
    }
}

/// Piecewise-constant timing schedule produced by [`enforce_timings`].
#[derive(Debug, Clone, PartialEq)]
pub struct Timeline {
    pub interval_ms: u64,
    pub steps: Vec<AppliedStep>,
}

impl Timeline {
    /// Step in force at `time_ms` (the last one past the end).
    pub fn at(&self, time_ms: f64) -> &AppliedStep {
        let k = (time_ms.max(0.0) / self.interval_ms as f64) as usize;
        &self.steps[k.min(self.steps.len() - 1)]
    }

    pub fn any_over_limit(&self) -> bool {
        self.steps.iter().any(AppliedStep::over_limit)
    }
}

/// Sample the trace at every interval boundary over its duration and apply
/// the table entry of the next table temperature at or above the sample.
/// Above the hottest point, standard timings apply and the step is flagged.
pub fn enforce_timings(table: &TimingTable, temps: &TemperatureTrace, interval_ms: u64) -> Result<Timeline> {
    if interval_ms == 0 {
        return Err(Error::config("enforcement interval must be positive"));
    }
    let dur_ms = temps.duration_s() * 1000.0;
    let n = ((dur_ms / interval_ms as f64).ceil() as usize).max(1);
    let mut flagged = 0usize;
    let steps = (0..n)
        .map(|k| {
            let start_ms = k as u64 * interval_ms;
            let temp = temps.temp_at(start_ms as f64 / 1000.0);
            match table.lookup(temp) {
                Some(e) => AppliedStep { start_ms, sampled_temp_c: temp, table_temp_c: Some(e.temp_c), timings: e.timings },
                None => {
                    flagged += 1;
                    AppliedStep { start_ms, sampled_temp_c: temp, table_temp_c: None, timings: table.standard }
                }
            }
        })
        .collect();
    if flagged > 0 {
        warn!("temperature above the hottest table point ({} degC) in {flagged} interval(s); standard timings applied", table.max_temp_c());
    }
    Ok(Timeline { interval_ms, steps })
}
