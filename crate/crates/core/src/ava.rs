//! AVA-DRAM: profiling restricted to the architecturally slowest cells,
//! SECDED per burst beat, and per-chip burst shuffling that spreads
//! same-position errors across codewords.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::aldram::{best_combo, TimingGrid, STANDARD_REFRESH_MS};
use crate::dram::{Param, TimingParams, Topology};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::variation::{mix64, CellCoords, CellScope, ChipModel, ProfileDigest, Stress};

// ---------------------------------------------------------------- SECDED

/// Hamming position (1..=71) of each data bit: the non-powers of two.
const DATA_POS: [u8; 64] = {
    let mut out = [0u8; 64];
    let mut p = 1u8;
    let mut k = 0;
    while k < 64 {
        if p & (p - 1) != 0 {
            out[k] = p;
            k += 1;
        }
        p += 1;
    }
    out
};

/// Inverse of [`DATA_POS`]: data bit at Hamming position `p`, or 0xff.
const POS_DATA: [u8; 72] = {
    let mut out = [0xffu8; 72];
    let mut k = 0;
    while k < 64 {
        out[DATA_POS[k] as usize] = k as u8;
        k += 1;
    }
    out
};

/// A (72,64) SECDED codeword. Check bits 0..=6 are the Hamming parities of
/// positions with bit k set; check bit 7 is the overall parity. Bit `i` of
/// the codeword is data bit `i` for `i < 64`, check bit `i - 64` otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Codeword72 {
    pub data: u64,
    pub check: u8,
}

impl Codeword72 {
    pub fn flip(mut self, bit: u32) -> Self {
        assert!(bit < 72, "codeword bit out of range");
        if bit < 64 {
            self.data ^= 1 << bit;
        } else {
            self.check ^= 1 << (bit - 64);
        }
        self
    }

    /// XOR of two codewords (for error vectors).
    pub fn xor(self, o: Codeword72) -> Self {
        Codeword72 { data: self.data ^ o.data, check: self.check ^ o.check }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Decoded {
    Clean(u64),
    /// Single error fixed at codeword bit `bit`.
    Corrected { data: u64, bit: u32 },
    Uncorrectable,
}

fn hamming_syndrome(data: u64) -> u8 {
    let mut s = 0u8;
    let mut d = data;
    while d != 0 {
        let i = d.trailing_zeros();
        s ^= DATA_POS[i as usize];
        d &= d - 1;
    }
    s
}

pub fn secded_encode(data: u64) -> Codeword72 {
    let h = hamming_syndrome(data);
    let overall = (data.count_ones() + h.count_ones()) & 1;
    Codeword72 { data, check: h | ((overall as u8) << 7) }
}

pub fn secded_decode(cw: Codeword72) -> Decoded {
    let syndrome = hamming_syndrome(cw.data) ^ (cw.check & 0x7f);
    let parity_err = (cw.data.count_ones() + cw.check.count_ones()) & 1 == 1;
    match (syndrome, parity_err) {
        (0, false) => Decoded::Clean(cw.data),
        (0, true) => Decoded::Corrected { data: cw.data, bit: 71 },
        (s, true) if s.is_power_of_two() => Decoded::Corrected { data: cw.data, bit: 64 + s.trailing_zeros() },
        (s, true) if (s as usize) < 72 => {
            let k = POS_DATA[s as usize] as u32;
            Decoded::Corrected { data: cw.data ^ (1 << k), bit: k }
        }
        _ => Decoded::Uncorrectable,
    }
}

// --------------------------------------------------------------- shuffle

/// Burst beats per transfer and chips per rank the shuffle operates on.
pub const BURSTS: usize = 8;
pub const CHIPS: usize = 8;

/// A 64-byte line: `line[burst]` holds chip `c`'s 8 lanes in bits
/// `8c..8c+8`.
pub type Line = [u64; BURSTS];

/// Per-chip burst permutation: chip `c`'s beat `b` travels in beat
/// `maps[c][b]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<u8>>", into = "Vec<Vec<u8>>")]
pub struct ShuffleMap {
    maps: [[u8; BURSTS]; CHIPS],
}

impl ShuffleMap {
    pub fn new(maps: [[u8; BURSTS]; CHIPS]) -> Result<Self> {
        for (c, m) in maps.iter().enumerate() {
            let mut seen = [false; BURSTS];
            for &b in m {
                if b as usize >= BURSTS || std::mem::replace(&mut seen[b as usize], true) {
                    return Err(Error::Config(format!("shuffle map of chip {c} is not a permutation of 0..8")));
                }
            }
        }
        Ok(ShuffleMap { maps })
    }

    pub fn identity() -> Self {
        ShuffleMap { maps: [std::array::from_fn(|b| b as u8); CHIPS] }
    }

    /// `map_c(b) = (b + c) mod 8`.
    pub fn rotation() -> Self {
        ShuffleMap { maps: std::array::from_fn(|c| std::array::from_fn(|b| ((b + c) % BURSTS) as u8)) }
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::identity()
    }

    pub fn get(&self, chip: usize, burst: usize) -> usize {
        self.maps[chip][burst] as usize
    }

    pub fn inverse(&self) -> Self {
        let mut inv = [[0u8; BURSTS]; CHIPS];
        for c in 0..CHIPS {
            for b in 0..BURSTS {
                inv[c][self.maps[c][b] as usize] = b as u8;
            }
        }
        ShuffleMap { maps: inv }
    }
}

impl TryFrom<Vec<Vec<u8>>> for ShuffleMap {
    type Error = Error;
    fn try_from(v: Vec<Vec<u8>>) -> Result<Self> {
        if v.len() != CHIPS || v.iter().any(|m| m.len() != BURSTS) {
            return Err(Error::config("shuffle map needs 8 permutations of 8 entries"));
        }
        let maps = std::array::from_fn(|c| std::array::from_fn(|b| v[c][b]));
        ShuffleMap::new(maps)
    }
}

impl From<ShuffleMap> for Vec<Vec<u8>> {
    fn from(m: ShuffleMap) -> Self {
        m.maps.iter().map(|r| r.to_vec()).collect()
    }
}

pub fn apply_shuffle(map: &ShuffleMap, line: &Line) -> Line {
    let mut out = [0u64; BURSTS];
    for (b, &word) in line.iter().enumerate() {
        for c in 0..CHIPS {
            let byte = (word >> (8 * c)) & 0xff;
            out[map.get(c, b)] |= byte << (8 * c);
        }
    }
    out
}

pub fn invert_shuffle(map: &ShuffleMap, line: &Line) -> Line {
    apply_shuffle(&map.inverse(), line)
}

// ----------------------------------------------------------- test region

/// Rows reserved for online latency tests. Each listed row is a full row
/// (every mat, every column) of every listed subarray.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestRegion {
    pub chips: Vec<u32>,
    pub banks: Vec<u32>,
    pub subarrays: Vec<u32>,
    /// Internal row indices within a subarray, ascending.
    pub rows: Vec<u32>,
    pub reserved: bool,
}

impl TestRegion {
    pub fn scope(&self, topo: &Topology) -> CellScope {
        CellScope::new(topo, self.chips.clone(), self.banks.clone(), self.subarrays.clone(), self.rows.clone())
    }

    /// Whether internal row `row` of any subarray belongs to the region.
    pub fn contains_row(&self, row: u32) -> bool {
        self.rows.binary_search(&row).is_ok()
    }

    /// Cells per subarray covered by the region on one chip.
    pub fn cells_per_subarray(&self, topo: &Topology) -> u64 {
        self.rows.len() as u64 * topo.chip_row_bits() as u64
    }

    /// Restrict to the given chips, banks and subarrays.
    pub fn restricted(mut self, chips: Vec<u32>, banks: Vec<u32>, subarrays: Vec<u32>) -> Self {
        self.chips = chips;
        self.banks = banks;
        self.subarrays = subarrays;
        self
    }
}

/// The region of architecturally slowest cells: in every mat-high band of
/// rows, the row maximizing the noise-free requirement of each bitline
/// parity. Both rows are taken whole, so they also cover the mat with the
/// latest precharge arrival and the far end of every wordline. Ties prefer
/// the band boundary.
pub fn select_test_region(chip: &ChipModel) -> TestRegion {
    let t = chip.topology();
    let side = t.cells_per_mat_side;
    let last_mat = t.mats_per_subarray_row - 1;
    let score = |row: u32, col: u32| -> f64 {
        let c = CellCoords { chip: 0, bank: 0, subarray: 0, row, mat_index: last_mat, col_in_mat: col };
        chip.architectural_nominal(&c).iter().sum()
    };
    let pick = |candidates: &mut dyn Iterator<Item = u32>, col: u32| -> u32 {
        let mut best: Option<(f64, u32)> = None;
        for r in candidates {
            let s = score(r, col);
            if best.is_none_or(|(b, _)| s > b) {
                best = Some((s, r));
            }
        }
        best.expect("non-empty band").1
    };
    let mut rows = Vec::new();
    let mut band = 0;
    while band < t.rows_per_subarray {
        let hi = (band + side).min(t.rows_per_subarray);
        // Even bitlines have their amplifiers at the low end, odd at the high end.
        rows.push(pick(&mut (band..hi).rev(), 0));
        rows.push(pick(&mut (band..hi), side.min(2) - 1));
        band = hi;
    }
    rows.sort_unstable();
    rows.dedup();
    TestRegion {
        chips: (0..t.chips_per_rank).collect(),
        banks: (0..t.banks_total() as u32).collect(),
        subarrays: (0..t.subarrays_per_bank).collect(),
        rows,
        reserved: true,
    }
}

// -------------------------------------------------------------- profiling

/// Result of [`ava_profile`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AvaProfile {
    /// Minimal error-free grid combination over the region, `None` if no
    /// combination passed.
    pub pre_margin: Option<TimingParams>,
    /// Timings to apply: `pre_margin` plus one clock on every reduced
    /// parameter (capped at standard), or standard timings.
    pub timings: TimingParams,
}

/// The AVA profiling grid: tRCD 5-13.75, tRAS 20-35, tWR 2.5-15, tRP
/// 5-13.75 ns in 1.25 ns steps, plus the standard values.
pub fn ava_grid(standard: &TimingParams) -> TimingGrid {
    TimingGrid::stepped([(5.0, 13.75), (20.0, 35.0), (2.5, 15.0), (5.0, 13.75)], 1.25, standard).expect("static grid")
}

/// Profile the test region (summarized in `region_digest`) at `temp_c` and
/// `refresh_ms`, then add the one-clock margin.
pub fn ava_profile(
    chip: &ChipModel,
    region_digest: &ProfileDigest,
    temp_c: f64,
    refresh_ms: f64,
    grid: &TimingGrid,
) -> AvaProfile {
    let std = *chip.standard();
    let pre = best_combo(grid, &std, None, |t| {
        region_digest.read.passes(chip, t, temp_c, refresh_ms) && region_digest.write.passes(chip, t, temp_c, refresh_ms)
    });
    let clock = chip.topology().clock_period_ps;
    let timings = match pre {
        None => std,
        Some(p) => {
            let mut t = p;
            for param in Param::ALL {
                let (v, s) = (p.get(param), std.get(param));
                if v < s {
                    t = t.with(param, (v + clock).min(s));
                }
            }
            t
        }
    };
    AvaProfile { pre_margin: pre, timings }
}

/// [`ava_profile`] at the standard refresh interval.
pub fn ava_profile_standard(chip: &ChipModel, region_digest: &ProfileDigest, temp_c: f64, grid: &TimingGrid) -> AvaProfile {
    ava_profile(chip, region_digest, temp_c, STANDARD_REFRESH_MS, grid)
}

// ------------------------------------------------------------ correction

/// Bit-level ECC tallies. Miscorrected and undetected words count as
/// uncorrectable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CorrectionStats {
    pub lines: u64,
    pub total_errors: u64,
    pub corrected: u64,
    pub uncorrectable: u64,
    /// Codewords with two or more erroneous bits.
    pub multi_bit_codewords: u64,
}

impl CorrectionStats {
    fn merge(self, o: Self) -> Self {
        CorrectionStats {
            lines: self.lines + o.lines,
            total_errors: self.total_errors + o.total_errors,
            corrected: self.corrected + o.corrected,
            uncorrectable: self.uncorrectable + o.uncorrectable,
            multi_bit_codewords: self.multi_bit_codewords + o.multi_bit_codewords,
        }
    }
}

/// Tally the decode outcome of every beat of an error line.
pub fn tally_line(errors: &Line) -> CorrectionStats {
    let mut s = CorrectionStats { lines: 1, ..Default::default() };
    for &e in errors {
        let w = e.count_ones() as u64;
        if w == 0 {
            continue;
        }
        s.total_errors += w;
        if w >= 2 {
            s.multi_bit_codewords += 1;
        }
        // The stored word is encode(0) = 0 with error vector `e` on the data
        // bits; the check bits come from an error-free ECC chip.
        match secded_decode(Codeword72 { data: e, check: 0 }) {
            Decoded::Corrected { data: 0, .. } => s.corrected += w,
            _ => s.uncorrectable += w,
        }
    }
    s
}

/// Operating point and sampling for [`evaluate_correction`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrectionSetup {
    pub timings: TimingParams,
    pub temp_c: f64,
    pub refresh_ms: f64,
    pub stress: Stress,
    pub lines: u64,
    pub seed: u64,
}

/// Location of sampled line `i`: `(bank, subarray, row, column)`.
pub fn sample_line(topo: &Topology, seed: u64, i: u64) -> (u32, u32, u32, u32) {
    let mut rng = ChaCha8Rng::seed_from_u64(mix64(seed ^ mix64(i)));
    (
        rng.random_range(0..topo.banks_total() as u32),
        rng.random_range(0..topo.subarrays_per_bank),
        rng.random_range(0..topo.rows_per_subarray),
        rng.random_range(0..topo.columns_per_row),
    )
}

/// Error vector of one line read, by burst beat, before shuffling.
pub fn line_errors(chip: &ChipModel, loc: (u32, u32, u32, u32), setup: &CorrectionSetup) -> Line {
    let topo = chip.topology();
    let (bank, sub, row, column) = loc;
    let mut line = [0u64; BURSTS];
    for c in 0..topo.chips_per_rank.min(CHIPS as u32) {
        for bit in 0..64u32 {
            let cell = CellCoords::from_access(topo, c, bank, sub, row, column, bit);
            if chip.cell_outcome(&cell, &setup.timings, setup.temp_c, setup.refresh_ms, &setup.stress).failed() {
                let (burst, lane) = (bit / 8, bit % 8);
                line[burst as usize] |= 1 << (8 * c + lane);
            }
        }
    }
    line
}

/// Sample `setup.lines` lines, read them under the failure oracle, arrange
/// errors per beat through `map` and decode each beat.
pub fn evaluate_correction(chip: &ChipModel, setup: &CorrectionSetup, map: &ShuffleMap, exec: Exec) -> CorrectionStats {
    let topo = chip.topology();
    exec.map_reduce(
        setup.lines as usize,
        CorrectionStats::default(),
        |i| {
            let errs = line_errors(chip, sample_line(topo, setup.seed, i as u64), setup);
            tally_line(&apply_shuffle(map, &errs))
        },
        CorrectionStats::merge,
    )
}

/// Paired identity/shuffled evaluation over the same sampled lines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShuffleComparison {
    pub seed: u64,
    pub identity: CorrectionStats,
    pub shuffled: CorrectionStats,
}

impl ShuffleComparison {
    /// Fraction of the identity mapping's uncorrectable error bits that the
    /// shuffle additionally corrects (0 when nothing was uncorrectable).
    pub fn newly_corrected_fraction(&self) -> f64 {
        if self.identity.uncorrectable == 0 {
            return 0.0;
        }
        (self.shuffled.corrected as f64 - self.identity.corrected as f64) / self.identity.uncorrectable as f64
    }
}

pub fn compare_shuffle(chip: &ChipModel, setup: &CorrectionSetup, map: &ShuffleMap, exec: Exec) -> ShuffleComparison {
    let topo = chip.topology();
    let (identity, shuffled) = exec.map_reduce(
        setup.lines as usize,
        (CorrectionStats::default(), CorrectionStats::default()),
        |i| {
            let errs = line_errors(chip, sample_line(topo, setup.seed, i as u64), setup);
            (tally_line(&errs), tally_line(&apply_shuffle(map, &errs)))
        },
        |a, b| (a.0.merge(b.0), a.1.merge(b.1)),
    );
    ShuffleComparison { seed: setup.seed, identity, shuffled }
}
