//! Emulated characterization: read and write tests with data patterns,
//! parameter/temperature/refresh sweeps, row-mapping estimation and burst-bit
//! error profiles, all against a [`ChipModel`].

use serde::{Deserialize, Serialize};

use crate::dram::{Address, TimingParams, Topology};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::variation::{CellCoords, CellScope, ChipModel, FailKind, Op, Outcome, Parity, Pattern, Stress};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AddressOrder {
    #[default]
    Ascending,
    Descending,
    ColumnMajor,
}

/// One characterization test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestSpec {
    pub op: Op,
    pub pattern: Pattern,
    pub timings: TimingParams,
    pub temp_c: f64,
    pub refresh_ms: f64,
    #[serde(default = "default_iterations")]
    pub iterations: u32,
    #[serde(default)]
    pub order: AddressOrder,
}

fn default_iterations() -> u32 {
    10
}

impl TestSpec {
    /// Pattern 0000, 55 degC, 64 ms, 10 iterations, ascending order.
    pub fn new(op: Op, timings: TimingParams) -> Self {
        TestSpec {
            op,
            pattern: Pattern::P0000,
            timings,
            temp_c: 55.0,
            refresh_ms: 64.0,
            iterations: default_iterations(),
            order: AddressOrder::Ascending,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::config("test needs at least one iteration"));
        }
        if !self.temp_c.is_finite() || !(self.refresh_ms > 0.0) {
            return Err(Error::config("test needs a finite temperature and positive refresh interval"));
        }
        Ok(())
    }

    pub fn stress(&self, iteration: u32) -> Stress {
        Stress::new(self.op).with_pattern(self.pattern).with_iteration(iteration)
    }
}

/// One failing (cell, iteration).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ErrorEntry {
    pub chip: u32,
    pub address: Address,
    /// Chip data-out bit, `burst * 8 + lane`.
    pub burst_bit: u8,
    pub kind: FailKind,
    pub iteration: u32,
}

/// Errors observed by one test, in scope order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ErrorLog {
    pub order: AddressOrder,
    pub entries: Vec<ErrorEntry>,
}

/// Flat row of the error-log CSV export.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub chip: u32,
    pub bank: u32,
    pub subarray: u32,
    pub row_ext: u32,
    pub row_int: u32,
    pub col: u32,
    pub burst_bit: u8,
    pub kind: FailKind,
    pub iteration: u32,
}

impl ErrorLog {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Distinct failing cells across iterations.
    pub fn cells(&self) -> std::collections::BTreeSet<(u32, Address, u8)> {
        self.entries.iter().map(|e| (e.chip, e.address, e.burst_bit)).collect()
    }

    pub fn records<'a>(&'a self, topo: &'a Topology) -> impl Iterator<Item = ErrorRecord> + 'a {
        self.entries.iter().map(move |e| ErrorRecord {
            chip: e.chip,
            bank: e.address.bank_index(topo) as u32,
            subarray: e.address.subarray,
            row_ext: e.address.row_external,
            row_int: e.address.row_internal,
            col: e.address.column,
            burst_bit: e.burst_bit,
            kind: e.kind,
            iteration: e.iteration,
        })
    }
}

/// Bus address and data-out bit of a cell.
pub fn cell_address(chip: &ChipModel, c: &CellCoords) -> (Address, u8) {
    let t = chip.topology();
    let (column, bit) = t.access_of(c.mat_index, c.col_in_mat);
    let bank = c.bank % t.banks_per_rank;
    let rank = (c.bank / t.banks_per_rank) % t.ranks_per_channel;
    let channel = c.bank / (t.banks_per_rank * t.ranks_per_channel);
    let addr = Address {
        channel,
        rank,
        bank,
        subarray: c.subarray,
        row_external: chip.row_map().to_external(c.row),
        row_internal: c.row,
        column,
        byte_offset: 0,
    };
    (addr, bit as u8)
}

fn run_test(chip: &ChipModel, spec: &TestSpec, scope: &CellScope, exec: Exec) -> Result<ErrorLog> {
    spec.validate()?;
    let rows = exec.map(scope.row_count(), |i| {
        let mut out = Vec::new();
        for c in scope.row_cells(i) {
            for it in 0..spec.iterations {
                if let Outcome::Fail(kind) = chip.cell_outcome(&c, &spec.timings, spec.temp_c, spec.refresh_ms, &spec.stress(it)) {
                    let (address, burst_bit) = cell_address(chip, &c);
                    out.push(ErrorEntry { chip: c.chip, address, burst_bit, kind, iteration: it });
                }
            }
        }
        out
    });
    Ok(ErrorLog { order: spec.order, entries: rows.into_iter().flatten().collect() })
}

/// Write the pattern with standard timings, read it back with the test
/// timings after one refresh interval, and log mismatches.
pub fn run_read_test(chip: &ChipModel, spec: &TestSpec, scope: &CellScope, exec: Exec) -> Result<ErrorLog> {
    if spec.op != Op::Read {
        return Err(Error::config("run_read_test needs a read spec"));
    }
    run_test(chip, spec, scope, exec)
}

/// Write the inverted pattern, then the pattern with the test timings, and
/// read back with standard timings after one refresh interval.
pub fn run_write_test(chip: &ChipModel, spec: &TestSpec, scope: &CellScope, exec: Exec) -> Result<ErrorLog> {
    if spec.op != Op::Write {
        return Err(Error::config("run_write_test needs a write spec"));
    }
    run_test(chip, spec, scope, exec)
}

/// Counts per chip data-out bit position.
pub fn burst_bit_error_profile(log: &ErrorLog) -> [u64; 64] {
    let mut out = [0u64; 64];
    for e in &log.entries {
        out[e.burst_bit as usize] += 1;
    }
    out
}

// ----------------------------------------------------------------- sweeps

/// Operating points of a sweep: every timing set at every temperature and
/// refresh interval.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepAxes {
    pub timings: Vec<TimingParams>,
    pub temps_c: Vec<f64>,
    pub refresh_ms: Vec<f64>,
}

impl SweepAxes {
    pub fn len(&self) -> usize {
        self.timings.len() * self.temps_c.len() * self.refresh_ms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Point `k` as `(timing index, temp, refresh)`, timing-major.
    pub fn point(&self, k: usize) -> (usize, f64, f64) {
        let nr = self.refresh_ms.len();
        let nt = self.temps_c.len();
        (k / (nt * nr), self.temps_c[(k / nr) % nt], self.refresh_ms[k % nr])
    }
}

/// Test conditions shared by every sweep point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepTemplate {
    pub op: Op,
    pub pattern: Pattern,
    pub iterations: u32,
}

impl SweepTemplate {
    pub fn new(op: Op) -> Self {
        SweepTemplate { op, pattern: Pattern::P0000, iterations: 1 }
    }
}

/// Error counts at one sweep point. Counts are (cell, iteration) failures.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub timing_index: usize,
    pub timings: TimingParams,
    pub temp_c: f64,
    pub refresh_ms: f64,
    pub errors: u64,
    /// Per scope row, split by bitline parity: `[even, odd]`.
    pub per_row: Vec<[u64; 2]>,
    pub burst_bits: [u64; 64],
}

impl SweepPoint {
    pub fn row_totals(&self) -> Vec<u64> {
        self.per_row.iter().map(|r| r[0] + r[1]).collect()
    }
}

/// Output of [`sweep`].
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub scope: CellScope,
    pub rows_per_mat: u32,
    pub points: Vec<SweepPoint>,
}

/// Long-format CSV row of a sweep cube.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub trcd_ns: f64,
    pub tras_ns: f64,
    pub twr_ns: f64,
    pub trp_ns: f64,
    pub temp_c: f64,
    pub refresh_ms: f64,
    pub errors: u64,
}

impl SweepResult {
    /// Errors aggregated by internal row modulo the mat height.
    pub fn row_histogram(&self, point: usize) -> Vec<u64> {
        let mut h = vec![0u64; self.rows_per_mat as usize];
        for (i, r) in self.points[point].per_row.iter().enumerate() {
            let row = self.scope.row_at(i).3;
            h[(row % self.rows_per_mat) as usize] += r[0] + r[1];
        }
        h
    }

    /// Counts indexed by `group * rows_per_subarray + external row`, where a
    /// group is one (chip, bank, subarray). `parity` restricts to one
    /// bitline parity. The scope must cover whole subarrays.
    pub fn external_row_counts(&self, chip: &ChipModel, point: usize, parity: Option<Parity>) -> Result<Vec<u64>> {
        let n = chip.topology().rows_per_subarray;
        if self.scope.rows.len() != n as usize {
            return Err(Error::config("external row counts need full subarrays in the scope"));
        }
        let p = &self.points[point];
        let mut out = vec![0u64; p.per_row.len()];
        for (i, r) in p.per_row.iter().enumerate() {
            let row = self.scope.row_at(i).3;
            let group = i / n as usize;
            let v = match parity {
                None => r[0] + r[1],
                Some(Parity::Even) => r[0],
                Some(Parity::Odd) => r[1],
            };
            out[group * n as usize + chip.row_map().to_external(row) as usize] += v;
        }
        Ok(out)
    }

    pub fn records(&self) -> impl Iterator<Item = SweepRecord> + '_ {
        self.points.iter().map(|p| SweepRecord {
            trcd_ns: p.timings.trcd().as_ns(),
            tras_ns: p.timings.tras().as_ns(),
            twr_ns: p.timings.twr().as_ns(),
            trp_ns: p.timings.trp().as_ns(),
            temp_c: p.temp_c,
            refresh_ms: p.refresh_ms,
            errors: p.errors,
        })
    }
}

/// Evaluate every point of `axes` over `scope`. Each cell profile is
/// computed once per iteration and tested against all points.
pub fn sweep(chip: &ChipModel, axes: &SweepAxes, tmpl: &SweepTemplate, scope: &CellScope, exec: Exec) -> Result<SweepResult> {
    if axes.is_empty() {
        return Err(Error::config("sweep axes must be non-empty"));
    }
    if tmpl.iterations == 0 {
        return Err(Error::config("sweep needs at least one iteration"));
    }
    let topo = chip.topology();
    let np = axes.len();
    let pts: Vec<(usize, f64, f64)> = (0..np).map(|k| axes.point(k)).collect();
    let per_row = exec.map(scope.row_count(), |i| {
        let mut rows = vec![[0u64; 2]; np];
        let mut bursts = vec![[0u64; 64]; np];
        for c in scope.row_cells(i) {
            let par = (c.parity() == Parity::Odd) as usize;
            let bit = topo.access_of(c.mat_index, c.col_in_mat).1 as usize;
            for it in 0..tmpl.iterations {
                let stress = Stress::new(tmpl.op).with_pattern(tmpl.pattern).with_iteration(it);
                let prof = chip.profile(&c, &stress);
                for (k, &(ti, temp, refresh)) in pts.iter().enumerate() {
                    if chip.outcome_of(&prof, &axes.timings[ti], temp, refresh, tmpl.op).failed() {
                        rows[k][par] += 1;
                        bursts[k][bit] += 1;
                    }
                }
            }
        }
        (rows, bursts)
    });
    let mut points: Vec<SweepPoint> = pts
        .iter()
        .map(|&(ti, temp_c, refresh_ms)| SweepPoint {
            timing_index: ti,
            timings: axes.timings[ti],
            temp_c,
            refresh_ms,
            errors: 0,
            per_row: Vec::with_capacity(per_row.len()),
            burst_bits: [0; 64],
        })
        .collect();
    for (rows, bursts) in per_row {
        for (k, p) in points.iter_mut().enumerate() {
            p.per_row.push(rows[k]);
            p.errors += rows[k][0] + rows[k][1];
            for b in 0..64 {
                p.burst_bits[b] += bursts[k][b];
            }
        }
    }
    Ok(SweepResult { scope: scope.clone(), rows_per_mat: topo.rows_per_mat(), points })
}

/// Sample autocorrelation of `x` at `lag`: mean-removed lagged products
/// averaged over the `n - lag` available pairs, over the variance. The
/// per-lag average keeps long lags from being biased towards zero.
pub fn autocorrelation(x: &[u64], lag: usize) -> f64 {
    let n = x.len();
    if lag >= n {
        return 0.0;
    }
    let mean = x.iter().sum::<u64>() as f64 / n as f64;
    let d: Vec<f64> = x.iter().map(|&v| v as f64 - mean).collect();
    let var = d.iter().map(|v| v * v).sum::<f64>() / n as f64;
    if var == 0.0 {
        return 0.0;
    }
    d.iter().zip(&d[lag..]).map(|(a, b)| a * b).sum::<f64>() / (n - lag) as f64 / var
}

/// Lag in `lo..=hi` with the largest autocorrelation (smallest lag on ties).
pub fn autocorrelation_peak(x: &[u64], lo: usize, hi: usize) -> usize {
    let mut best = (f64::NEG_INFINITY, lo);
    for lag in lo..=hi {
        let r = autocorrelation(x, lag);
        if r > best.0 {
            best = (r, lag);
        }
    }
    best.1
}

// ------------------------------------------------------ row-map estimate

/// Estimate for one external row-address bit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BitClaim {
    /// Internal bit this external bit is claimed to drive.
    pub internal_bit: Option<u32>,
    /// Agreement fraction with the claimed bit (or best candidate), folded
    /// so that inverted bits also count: in `[0.5, 1]`.
    pub confidence: f64,
}

/// Per external row-address bit, LSB first.
#[derive(Debug, Clone, PartialEq)]
pub struct RowMapEstimate {
    pub bits: Vec<BitClaim>,
}

impl RowMapEstimate {
    /// Claimed permutation `perm[external] = internal`, if every bit is
    /// claimed.
    pub fn permutation(&self) -> Option<Vec<u32>> {
        self.bits.iter().map(|b| b.internal_bit).collect()
    }
}

/// Rank the rows of every mat-high group by error count; the rank's binary
/// digits stand for the internal row bits. Each internal bit is matched to
/// the external bit that agrees with it most often across all groups.
/// Ties in count keep external order; ties in agreement prefer the lower
/// bit index.
pub fn estimate_row_mapping(counts: &[u64], rows_per_mat: u32) -> Result<RowMapEstimate> {
    let n = rows_per_mat as usize;
    if !rows_per_mat.is_power_of_two() || rows_per_mat < 2 {
        return Err(Error::config("rows per mat must be a power of two >= 2"));
    }
    if counts.len() < n || counts.len() % n != 0 {
        return Err(Error::config("counts must cover whole mat-high row groups"));
    }
    let bits = rows_per_mat.trailing_zeros() as usize;
    if counts.iter().all(|&c| c == counts[0]) {
        return Ok(RowMapEstimate { bits: vec![BitClaim { internal_bit: None, confidence: 0.5 }; bits] });
    }
    // agree[i][j]: rows whose rank bit i equals external bit j.
    let mut agree = vec![vec![0u64; bits]; bits];
    let mut total = 0u64;
    for g in counts.chunks(n) {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&e| g[e]);
        for (rank, &ext) in order.iter().enumerate() {
            for (i, row) in agree.iter_mut().enumerate() {
                for (j, a) in row.iter_mut().enumerate() {
                    *a += (((rank >> i) ^ (ext >> j)) & 1 == 0) as u64;
                }
            }
        }
        total += n as u64;
    }
    let conf = |i: usize, j: usize| {
        let a = agree[i][j] as f64 / total as f64;
        a.max(1.0 - a)
    };
    // Best external bit per internal bit, then resolve collisions in favour
    // of the stronger claim.
    let mut claims: Vec<(usize, usize, f64)> = (0..bits)
        .map(|i| {
            let j = (0..bits).fold(0, |b, j| if conf(i, j) > conf(i, b) { j } else { b });
            (i, j, conf(i, j))
        })
        .collect();
    claims.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)));
    let mut out: Vec<BitClaim> = (0..bits)
        .map(|j| BitClaim { internal_bit: None, confidence: (0..bits).map(|i| conf(i, j)).fold(0.5, f64::max) })
        .collect();
    for (i, j, c) in claims {
        if out[j].internal_bit.is_none() {
            out[j] = BitClaim { internal_bit: Some(i as u32), confidence: c };
        }
    }
    Ok(RowMapEstimate { bits: out })
}
