//! Seeded per-cell model of minimal reliable timings and retention.
//!
//! Every cell's requirement is the product of a nominal value and four
//! factors: distance from its sense amplifier and wordline driver
//! (architectural), a clamped Gaussian perturbation (process), a linear
//! temperature slowdown, and a charge term that grows once the refresh
//! interval eats into the cell's retention time. The precharge requirement
//! additionally carries the arrival delay of the precharge control signal at
//! the cell's mat.

mod digest;
mod noise;
mod scope;

use serde::{Deserialize, Serialize};

use crate::dram::{Param, Ps, RowMap, TimingParams, Topology};
use crate::error::{Error, Result};

pub use digest::{OpDigest, ProfileDigest, StressSet};
pub use noise::{fold, gaussian, gaussian_fast, inv_norm_cdf, mix64, unit};
pub use scope::CellScope;

/// Temperature at which the nominal requirements hold.
pub const REFERENCE_TEMP_C: f64 = 55.0;
/// Temperature at which `retention_median_ms` is specified.
pub const RETENTION_REF_TEMP_C: f64 = 85.0;
/// Noise is clamped at this many standard deviations.
pub const NOISE_CLAMP: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VariationParams {
    pub kappa_bitline: f64,
    pub kappa_wordline: f64,
    pub alpha_ps: f64,
    pub beta_ps: f64,
    pub sigma_process: f64,
    pub lambda_temp: f64,
    pub retention_median_ms: f64,
    pub retention_sigma: f64,
    pub gamma_charge: f64,
    pub c0: f64,
    /// Extra charge deficit per unit of restore-time shortfall (tRAS for
    /// reads, tWR for writes) relative to the datasheet value.
    pub restore_coupling: f64,
    /// Share of the per-cell noise that is re-drawn per test operation.
    pub op_weight: f64,
    /// Share re-drawn per data pattern.
    pub pattern_weight: f64,
    /// Share re-drawn per test iteration.
    pub iteration_weight: f64,
    /// Probability that a cell sits in its low-retention state in a given
    /// iteration (variable retention time). Zero disables it.
    pub vrt_probability: f64,
    pub vrt_factor: f64,
    pub seed: u64,
}

impl Default for VariationParams {
    fn default() -> Self {
        VariationParams {
            kappa_bitline: 0.25,
            kappa_wordline: 0.05,
            alpha_ps: 120.0,
            beta_ps: 15.0,
            sigma_process: 0.04,
            lambda_temp: 0.004,
            retention_median_ms: 2000.0,
            retention_sigma: 0.6,
            gamma_charge: 0.1,
            c0: 0.25,
            restore_coupling: 1.0,
            op_weight: 0.55,
            pattern_weight: 0.2,
            iteration_weight: 0.12,
            vrt_probability: 0.0,
            vrt_factor: 0.5,
            seed: 1,
        }
    }
}

impl VariationParams {
    /// No architectural, process, temperature or charge variation.
    pub fn disabled() -> Self {
        VariationParams {
            kappa_bitline: 0.0,
            kappa_wordline: 0.0,
            alpha_ps: 0.0,
            beta_ps: 0.0,
            sigma_process: 0.0,
            lambda_temp: 0.0,
            retention_sigma: 0.0,
            gamma_charge: 0.0,
            restore_coupling: 0.0,
            ..VariationParams::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.kappa_bitline,
            self.kappa_wordline,
            self.alpha_ps,
            self.beta_ps,
            self.sigma_process,
            self.lambda_temp,
            self.retention_median_ms,
            self.retention_sigma,
            self.gamma_charge,
            self.c0,
            self.restore_coupling,
            self.op_weight,
            self.pattern_weight,
            self.iteration_weight,
            self.vrt_probability,
            self.vrt_factor,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("variation parameters must be finite"));
        }
        if self.kappa_bitline < 0.0 || self.kappa_wordline < 0.0 {
            return Err(Error::config("kappa must be >= 0"));
        }
        if self.beta_ps < 0.0 || (self.alpha_ps <= self.beta_ps && self.alpha_ps != 0.0) {
            return Err(Error::config("precharge delays need alpha > beta >= 0"));
        }
        if self.sigma_process < 0.0 || self.retention_sigma < 0.0 {
            return Err(Error::config("sigma must be >= 0"));
        }
        if self.retention_median_ms <= 0.0 {
            return Err(Error::config("retention_median_ms must be > 0"));
        }
        if self.lambda_temp < 0.0 || self.lambda_temp * REFERENCE_TEMP_C >= 1.0 {
            return Err(Error::config("lambda_temp must keep the temperature factor positive"));
        }
        if self.gamma_charge < 0.0 || self.c0 < 0.0 || self.restore_coupling < 0.0 {
            return Err(Error::config("charge coupling constants must be >= 0"));
        }
        let w2 = self.op_weight.powi(2) + self.pattern_weight.powi(2) + self.iteration_weight.powi(2);
        if self.op_weight < 0.0 || self.pattern_weight < 0.0 || self.iteration_weight < 0.0 || w2 > 1.0 {
            return Err(Error::config("noise share weights must be >= 0 with squares summing to <= 1"));
        }
        if !(0.0..=1.0).contains(&self.vrt_probability) || self.vrt_factor <= 0.0 {
            return Err(Error::config("vrt_probability in [0,1] and vrt_factor > 0 required"));
        }
        Ok(())
    }

    fn static_weight(&self) -> f64 {
        let w2 = self.op_weight.powi(2) + self.pattern_weight.powi(2) + self.iteration_weight.powi(2);
        (1.0 - w2).max(0.0).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Op {
    Read,
    Write,
}

impl Op {
    /// Parameters a test of this kind exercises.
    pub fn params(self) -> [Param; 3] {
        match self {
            Op::Read => [Param::Trcd, Param::Tras, Param::Trp],
            Op::Write => [Param::Trcd, Param::Twr, Param::Trp],
        }
    }

    /// The restore parameter whose shortfall reduces stored charge.
    pub fn restore_param(self) -> Param {
        match self {
            Op::Read => Param::Tras,
            Op::Write => Param::Twr,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Op::Read => "read",
            Op::Write => "write",
        }
    }
}

/// Test data patterns: eight checkered patterns plus row stripes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pattern {
    #[serde(rename = "0000")]
    P0000,
    #[serde(rename = "0011")]
    P0011,
    #[serde(rename = "0101")]
    P0101,
    #[serde(rename = "1001")]
    P1001,
    #[serde(rename = "0110")]
    P0110,
    #[serde(rename = "1010")]
    P1010,
    #[serde(rename = "1100")]
    P1100,
    #[serde(rename = "1111")]
    P1111,
    #[serde(rename = "row_stripe")]
    RowStripe,
}

impl Pattern {
    pub const CHECKERED: [Pattern; 8] = [
        Pattern::P0000,
        Pattern::P0011,
        Pattern::P0101,
        Pattern::P1001,
        Pattern::P0110,
        Pattern::P1010,
        Pattern::P1100,
        Pattern::P1111,
    ];

    pub fn id(self) -> u64 {
        self as u64
    }

    pub fn name(self) -> &'static str {
        match self {
            Pattern::P0000 => "0000",
            Pattern::P0011 => "0011",
            Pattern::P0101 => "0101",
            Pattern::P1001 => "1001",
            Pattern::P0110 => "0110",
            Pattern::P1010 => "1010",
            Pattern::P1100 => "1100",
            Pattern::P1111 => "1111",
            Pattern::RowStripe => "row_stripe",
        }
    }

    pub fn parse(s: &str) -> Option<Pattern> {
        Self::CHECKERED
            .iter()
            .chain(std::iter::once(&Pattern::RowStripe))
            .copied()
            .find(|p| p.name() == s)
    }
}

/// Test conditions that re-salt part of the per-cell noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Stress {
    pub op: Op,
    pub pattern: Pattern,
    pub iteration: u32,
}

impl Stress {
    pub fn new(op: Op) -> Self {
        Stress { op, pattern: Pattern::P0000, iteration: 0 }
    }

    pub fn with_pattern(mut self, p: Pattern) -> Self {
        self.pattern = p;
        self
    }

    pub fn with_iteration(mut self, i: u32) -> Self {
        self.iteration = i;
        self
    }
}

impl Default for Stress {
    fn default() -> Self {
        Stress::new(Op::Read)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Even,
    Odd,
}

/// Physical location of one cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellCoords {
    pub chip: u32,
    /// Flat bank index across channels and ranks.
    pub bank: u32,
    pub subarray: u32,
    /// Internal row within the subarray.
    pub row: u32,
    pub mat_index: u32,
    pub col_in_mat: u32,
}

impl CellCoords {
    /// Cell holding data-out bit `bit` of `column` in internal `row`.
    pub fn from_access(topo: &Topology, chip: u32, bank: u32, subarray: u32, row: u32, column: u32, bit: u32) -> Self {
        let (mat_index, col_in_mat) = topo.bit_location(column, bit);
        CellCoords { chip, bank, subarray, row, mat_index, col_in_mat }
    }

    pub fn row_in_mat(&self, topo: &Topology) -> u32 {
        self.row % topo.cells_per_mat_side
    }

    /// Alternate bitlines attach to the amplifier rows below (even) and
    /// above (odd) the mat.
    pub fn parity(&self) -> Parity {
        if self.col_in_mat % 2 == 0 {
            Parity::Even
        } else {
            Parity::Odd
        }
    }
}

/// Normalized distance between a cell and its sense amplifier, in [0, 1].
pub fn bitline_distance(c: &CellCoords, topo: &Topology) -> f64 {
    let n1 = (topo.cells_per_mat_side - 1) as f64;
    let r = c.row_in_mat(topo) as f64;
    match c.parity() {
        Parity::Even => r / n1,
        Parity::Odd => (n1 - r) / n1,
    }
}

/// Normalized distance between a cell and its local wordline driver.
pub fn wordline_distance(c: &CellCoords, topo: &Topology) -> f64 {
    c.col_in_mat as f64 / (topo.cells_per_mat_side - 1) as f64
}

/// Arrival of the precharge control signal at mat `m` of `mats`: the main
/// signal accrues `alpha` per mat left to right; the sub signal crosses the
/// array at `beta` per mat and then accrues `alpha` per mat right to left.
/// Sense amplifiers react to whichever arrives first.
pub fn precharge_arrival_delay(m: u32, mats: u32, alpha_ps: f64, beta_ps: f64) -> f64 {
    assert!(m < mats, "mat index out of range");
    let m = m as f64;
    let last = (mats - 1) as f64;
    (m * alpha_ps).min(last * beta_ps + (last - m) * alpha_ps)
}

/// Temperature-independent view of one cell under one stress.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellProfile {
    /// Requirement at the reference temperature with full charge, in ps,
    /// indexed like [`Param::ALL`].
    pub nominal: [f64; 4],
    pub retention85_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FailKind {
    Timing,
    Retention,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Pass,
    Fail(FailKind),
}

impl Outcome {
    pub fn failed(self) -> bool {
        self != Outcome::Pass
    }
}

/// Shared constants needed to turn a [`CellProfile`] into requirements.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RequirementModel {
    lambda_temp: f64,
    gamma: f64,
    c0: f64,
    restore_coupling: f64,
    floors: [f64; 4],
    standard: [f64; 4],
}

impl RequirementModel {
    #[inline]
    pub fn temp_factor(&self, temp_c: f64) -> f64 {
        1.0 + self.lambda_temp * (temp_c - REFERENCE_TEMP_C)
    }

    /// Fractional restore-time shortfall of `applied` for `op`.
    #[inline]
    pub fn shortfall(&self, applied: &TimingParams, op: Op) -> f64 {
        let p = op.restore_param();
        let i = p as usize;
        (1.0 - applied.get(p).0 as f64 / self.standard[i]).max(0.0)
    }

    #[inline]
    pub fn charge_factor(&self, refresh_ms: f64, retention_ms: f64, shortfall: f64) -> f64 {
        let c = refresh_ms / retention_ms * (1.0 + self.restore_coupling * shortfall);
        1.0 + self.gamma * (c - self.c0).max(0.0)
    }

    /// Requirement in ps of each parameter for a cell at `temp_c`.
    #[inline]
    pub fn required(&self, p: &CellProfile, temp_c: f64, refresh_ms: f64, shortfall: f64) -> [f64; 4] {
        let ret = retention_at(p.retention85_ms, temp_c);
        let k = self.temp_factor(temp_c) * self.charge_factor(refresh_ms, ret, shortfall);
        let mut out = [0.0; 4];
        for i in 0..4 {
            out[i] = (p.nominal[i] * k).max(self.floors[i]);
        }
        out
    }
}

/// Retention scales by 2x for every 10 degC below the 85 degC reference.
#[inline]
pub fn retention_at(retention85_ms: f64, temp_c: f64) -> f64 {
    retention85_ms * 2f64.powf((RETENTION_REF_TEMP_C - temp_c) / 10.0)
}

// Noise stream identifiers.
const S_RET: u64 = 0x52;
const S_VRT: u64 = 0x56;
const S_COMP: u64 = 0x43;
const S_OP: u64 = 0x4f;
const S_PAT: u64 = 0x50;
const S_ITER: u64 = 0x49;

/// Immutable per-chip ground truth: nominal requirements, variation
/// parameters and the internal row scrambling.
#[derive(Debug, Clone, PartialEq)]
pub struct ChipModel {
    topo: Topology,
    params: VariationParams,
    nominal: TimingParams,
    standard: TimingParams,
    floor_trcd: Ps,
    row_map: RowMap,
    req: RequirementModel,
}

/// Hard floor on the activation requirement.
pub const TRCD_FLOOR: Ps = Ps(5_000);

impl ChipModel {
    /// `nominal` is the requirement of a zero-distance cell at 55 degC with
    /// full charge; `standard` is the datasheet timing set the chip is sold
    /// against.
    pub fn new(topo: Topology, params: VariationParams, nominal: TimingParams, standard: TimingParams) -> Result<Self> {
        topo.validate()?;
        params.validate()?;
        let row_map = RowMap { perm: Vec::new(), xor_mask: 0 };
        let req = Self::build_requirements(&params, &standard, TRCD_FLOOR);
        Ok(ChipModel { topo, params, nominal, standard, floor_trcd: TRCD_FLOOR, row_map, req })
    }

    fn build_requirements(params: &VariationParams, standard: &TimingParams, floor_trcd: Ps) -> RequirementModel {
        let mut floors = [0.0; 4];
        floors[Param::Trcd as usize] = floor_trcd.0 as f64;
        let mut std = [0.0; 4];
        for p in Param::ALL {
            std[p as usize] = standard.get(p).0 as f64;
        }
        RequirementModel {
            lambda_temp: params.lambda_temp,
            gamma: params.gamma_charge,
            c0: params.c0,
            restore_coupling: params.restore_coupling,
            floors,
            standard: std,
        }
    }

    pub fn with_row_map(mut self, map: RowMap) -> Result<Self> {
        map.validate(self.topo.rows_per_subarray)?;
        self.row_map = map;
        Ok(self)
    }

    pub fn with_trcd_floor(mut self, floor: Ps) -> Self {
        self.floor_trcd = floor;
        self.req = Self::build_requirements(&self.params, &self.standard, floor);
        self
    }

    pub fn topology(&self) -> &Topology {
        &self.topo
    }
    pub fn params(&self) -> &VariationParams {
        &self.params
    }
    pub fn nominal(&self) -> &TimingParams {
        &self.nominal
    }
    pub fn standard(&self) -> &TimingParams {
        &self.standard
    }
    pub fn row_map(&self) -> &RowMap {
        &self.row_map
    }
    pub fn requirement_model(&self) -> &RequirementModel {
        &self.req
    }
    pub fn trcd_floor(&self) -> Ps {
        self.floor_trcd
    }

    #[inline]
    fn cell_key(&self, c: &CellCoords) -> u64 {
        let h = fold(self.params.seed, c.chip as u64);
        let h = fold(h, c.bank as u64);
        let h = fold(h, c.subarray as u64);
        let h = fold(h, c.row as u64);
        fold(h, ((c.mat_index as u64) << 32) | c.col_in_mat as u64)
    }

    /// Retention at 85 degC in its normal (non-VRT) state.
    pub fn retention85_ms(&self, c: &CellCoords) -> f64 {
        let z = gaussian(fold(self.cell_key(c), S_RET));
        self.params.retention_median_ms * (self.params.retention_sigma * z).exp()
    }

    pub fn retention_time(&self, c: &CellCoords, temp_c: f64) -> f64 {
        retention_at(self.retention85_ms(c), temp_c)
    }

    /// Deterministic (noise-free) requirement of each parameter, indexed like
    /// [`Param::ALL`], at the reference temperature with full charge.
    pub fn architectural_nominal(&self, c: &CellCoords) -> [f64; 4] {
        let t = &self.topo;
        let p = &self.params;
        let dist = 1.0 + p.kappa_bitline * bitline_distance(c, t) + p.kappa_wordline * wordline_distance(c, t);
        let mut out = [0.0; 4];
        for param in Param::ALL {
            out[param as usize] = self.nominal.get(param).0 as f64 * dist;
        }
        out[Param::Trp as usize] +=
            precharge_arrival_delay(c.mat_index, t.mats_per_subarray_row, p.alpha_ps, p.beta_ps);
        out
    }

    /// Profile of `c` under `stress`.
    pub fn profile(&self, c: &CellCoords, stress: &Stress) -> CellProfile {
        let key = self.cell_key(c);
        let p = &self.params;
        let mut nominal = self.architectural_nominal(c);
        if p.sigma_process > 0.0 {
            let ws = p.static_weight();
            let k_op = fold(key, S_OP ^ ((stress.op as u64) << 8));
            let k_pat = fold(key, S_PAT ^ (stress.pattern.id() << 8));
            let k_it = fold(key, S_ITER ^ ((stress.iteration as u64) << 8));
            for (i, v) in nominal.iter_mut().enumerate() {
                let comp = (i as u64) << 20;
                let mut z = ws * gaussian_fast(fold(key, S_COMP ^ comp));
                if p.op_weight > 0.0 {
                    z += p.op_weight * gaussian_fast(fold(k_op, comp));
                }
                if p.pattern_weight > 0.0 {
                    z += p.pattern_weight * gaussian_fast(fold(k_pat, comp));
                }
                if p.iteration_weight > 0.0 {
                    z += p.iteration_weight * gaussian_fast(fold(k_it, comp));
                }
                *v *= 1.0 + p.sigma_process * z.clamp(-NOISE_CLAMP, NOISE_CLAMP);
            }
        }
        let mut retention85_ms = if p.retention_sigma > 0.0 {
            p.retention_median_ms * (p.retention_sigma * gaussian(fold(key, S_RET))).exp()
        } else {
            p.retention_median_ms
        };
        if p.vrt_probability > 0.0 {
            let u = unit(fold(fold(key, S_VRT), stress.iteration as u64));
            if u < p.vrt_probability {
                retention85_ms *= p.vrt_factor;
            }
        }
        CellProfile { nominal, retention85_ms }
    }

    fn to_timing(&self, req: [f64; 4]) -> TimingParams {
        let ps = |i: usize| Ps((req[i].ceil() as u64).max(1));
        self.standard.with_core(ps(0), ps(1), ps(2), ps(3))
    }

    /// Minimal reliable timings of `c` under the default read stress with
    /// full restore.
    pub fn required_timings(&self, c: &CellCoords, temp_c: f64, refresh_ms: f64) -> TimingParams {
        self.required_timings_under(c, &Stress::default(), temp_c, refresh_ms, 0.0)
    }

    pub fn required_timings_under(&self, c: &CellCoords, stress: &Stress, temp_c: f64, refresh_ms: f64, shortfall: f64) -> TimingParams {
        let prof = self.profile(c, stress);
        self.to_timing(self.req.required(&prof, temp_c, refresh_ms, shortfall))
    }

    /// Ground-truth outcome of accessing `c` with `applied` timings.
    pub fn cell_failure_oracle(&self, c: &CellCoords, applied: &TimingParams, temp_c: f64, refresh_ms: f64, op: Op) -> Outcome {
        self.cell_outcome(c, applied, temp_c, refresh_ms, &Stress::new(op))
    }

    pub fn cell_outcome(&self, c: &CellCoords, applied: &TimingParams, temp_c: f64, refresh_ms: f64, stress: &Stress) -> Outcome {
        let prof = self.profile(c, stress);
        self.outcome_of(&prof, applied, temp_c, refresh_ms, stress.op)
    }

    /// Outcome for an already computed profile.
    #[inline]
    pub fn outcome_of(&self, prof: &CellProfile, applied: &TimingParams, temp_c: f64, refresh_ms: f64, op: Op) -> Outcome {
        if refresh_ms > retention_at(prof.retention85_ms, temp_c) {
            return Outcome::Fail(FailKind::Retention);
        }
        let req = self.req.required(prof, temp_c, refresh_ms, self.req.shortfall(applied, op));
        for p in op.params() {
            if (applied.get(p).0 as f64) < req[p as usize].ceil() {
                return Outcome::Fail(FailKind::Timing);
            }
        }
        Outcome::Pass
    }
}
