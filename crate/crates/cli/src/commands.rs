use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use dramlat::aldram::{
    enforce_timings, identify_timing_table, safe_refresh_intervals, Identify, TimingGrid, TimingTable,
};
use dramlat::ava::{ava_grid, ava_profile, compare_shuffle, select_test_region, CorrectionSetup, CorrectionStats, TestRegion};
use dramlat::dram::{Ps, TimingParams};
use dramlat::harness::{sweep, SweepAxes, SweepTemplate};
use dramlat::presets::ChipPreset;
use dramlat::sim::{run_simulation, Mechanism, Placement, SimConfig, Stats, Trace};
use dramlat::tldram::derive_segment_timings;
use dramlat::variation::{ChipModel, ProfileDigest, Stress, StressSet};
use dramlat::Exec;
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::config::{Experiment, ExperimentConfig, GridName, GridSpec, MechanismSpec, PlacementKind, SCHEMA_VERSION};

pub const STATS_FILE: &str = "stats.csv";
pub const REPORT_FILE: &str = "report.toml";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const PROFILE_FILE: &str = "profile.toml";
pub const SHUFFLE_FILE: &str = "shuffle.csv";

/// Failure to write results, as opposed to bad input.
#[derive(Debug)]
pub struct OutputError(pub String);

impl std::fmt::Display for OutputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for OutputError {}

/// How a command that produced its outputs ended.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Status {
    Ok,
    /// Uncorrectable errors were observed and the caller asked to fail on them.
    Uncorrectable(String),
}

pub struct Ctx {
    pub exp: Experiment,
    pub out_dir: PathBuf,
    pub exec: Exec,
}

impl Ctx {
    fn write(&self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let p = self.out_dir.join(name);
        fs::create_dir_all(&self.out_dir)
            .and_then(|_| fs::write(&p, bytes))
            .map_err(|e| OutputError(format!("cannot write {}: {e}", p.display())))?;
        info!("wrote {}", p.display());
        Ok(p)
    }
}

fn csv_bytes<F>(header: &[&str], fill: F) -> Result<Vec<u8>>
where
    F: FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    fill(&mut w)?;
    w.into_inner().map_err(|e| anyhow!("csv buffer: {e}"))
}

// ------------------------------------------------------------------- run

pub const STATS_COLUMNS: [&str; 10] = [
    "workload",
    "mechanism",
    "ipc_proxy",
    "avg_read_latency_ns",
    "rowbuf_frac",
    "near_frac",
    "far_frac",
    "energy_units",
    "errors_corrected",
    "errors_uncorrectable",
];

#[derive(Debug, Serialize)]
struct RunReport<'a> {
    seed: u64,
    mechanism: String,
    workloads: Vec<String>,
    mem_cycles: u64,
    timings_over_limit: bool,
    aggregate: Stats,
    per_core: Vec<Stats>,
    config: &'a ExperimentConfig,
}

fn workload_name(p: &Path) -> String {
    p.file_stem().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned())
}

pub fn load_trace(p: &Path) -> Result<Trace> {
    let text = fs::read_to_string(p).with_context(|| format!("cannot read trace {}", p.display()))?;
    Trace::parse(&text).with_context(|| format!("trace {}", p.display()))
}

pub fn run(ctx: &Ctx, trace_paths: &[PathBuf], fail_on_uncorrectable: bool) -> Result<Status> {
    if trace_paths.is_empty() {
        bail!("run needs at least one --trace");
    }
    let traces = trace_paths.iter().map(|p| load_trace(p)).collect::<Result<Vec<_>>>()?;
    let exp = &ctx.exp;
    let chip = exp.chip()?;
    let cfg = exp.sim_config(chip.as_ref())?;
    let mech = build_mechanism(ctx, &cfg, chip.as_ref())?;
    let over_limit = matches!(&mech, Mechanism::AlDram { timeline, .. } if timeline.any_over_limit());
    if over_limit {
        warn!("temperature exceeded the timing table; standard timings were applied there");
    }
    let res = run_simulation(&cfg, &mech, chip.as_ref(), &traces)?;
    let name = mech.name();
    let names: Vec<String> = trace_paths.iter().map(|p| workload_name(p)).collect();
    let mut rows: Vec<(String, Stats)> = names.iter().cloned().zip(res.per_core.iter().copied()).collect();
    if traces.len() > 1 {
        rows.push(("all".into(), res.aggregate));
    }
    let csv = csv_bytes(&STATS_COLUMNS, |w| {
        for (wl, s) in &rows {
            w.write_record([
                wl.clone(),
                name.clone(),
                s.ipc_proxy.to_string(),
                s.avg_read_latency_ns.to_string(),
                s.row_buffer_frac().to_string(),
                s.near_frac().to_string(),
                s.far_frac().to_string(),
                s.energy_units.to_string(),
                s.errors_corrected.to_string(),
                s.errors_uncorrectable.to_string(),
            ])?;
        }
        Ok(())
    })?;
    ctx.write(STATS_FILE, &csv)?;
    let report = RunReport {
        seed: exp.seed(),
        mechanism: name,
        workloads: names,
        mem_cycles: res.mem_cycles,
        timings_over_limit: over_limit,
        aggregate: res.aggregate,
        per_core: res.per_core.clone(),
        config: &exp.cfg,
    };
    ctx.write(REPORT_FILE, toml::to_string(&report)?.as_bytes())?;
    let u = res.aggregate.errors_uncorrectable;
    if fail_on_uncorrectable && u > 0 {
        return Ok(Status::Uncorrectable(format!("{u} uncorrectable error bit(s) observed")));
    }
    Ok(Status::Ok)
}

fn build_mechanism(ctx: &Ctx, cfg: &SimConfig, chip: Option<&ChipModel>) -> Result<Mechanism> {
    let exp = &ctx.exp;
    Ok(match &exp.cfg.mechanism {
        MechanismSpec::Baseline => Mechanism::Baseline,
        &MechanismSpec::Tldram { near_rows, placement, policy, derive } => {
            let segments = derive_segment_timings(near_rows, cfg.topology.rows_per_subarray, &cfg.timings, derive)
                .context("mechanism: cannot derive segment timings")?;
            let placement = match placement {
                PlacementKind::Inclusive => Placement::Inclusive(policy),
                PlacementKind::Exclusive => Placement::Exclusive(policy),
                PlacementKind::Static => Placement::Static,
                PlacementKind::Profile => Placement::Profile,
            };
            Mechanism::TlDram { segments, placement }
        }
        MechanismSpec::Aldram { table, enforce_interval_ms } => {
            let table = match table {
                Some(p) => read_profile(&exp.resolve(p))?.aldram.ok_or_else(|| {
                    anyhow!("mechanism: {} holds no AL-DRAM timing table", p.display())
                })?,
                None => {
                    let chip = chip.ok_or_else(|| anyhow!("mechanism: aldram without a table needs a [chip] section"))?;
                    identify(ctx, chip)?
                }
            };
            if table.standard() != &cfg.timings {
                warn!("timing table was built for different standard timings than the run uses");
            }
            let temperature = exp.temperature()?;
            let timeline = enforce_timings(&table, &temperature, *enforce_interval_ms)?;
            Mechanism::AlDram { timeline, temperature }
        }
        MechanismSpec::Ava { profile, shuffle } => {
            let doc = match profile {
                Some(p) => read_profile(&exp.resolve(p))?
                    .ava
                    .ok_or_else(|| anyhow!("mechanism: {} holds no AVA profile", p.display()))?,
                None => {
                    let chip = chip.ok_or_else(|| anyhow!("mechanism: ava without a profile needs a [chip] section"))?;
                    profile_ava(ctx, chip)?
                }
            };
            Mechanism::Ava { timings: doc.timings, shuffle: shuffle.resolve()?, reserved_rows: doc.region.rows }
        }
    })
}

// --------------------------------------------------------------- profile

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ProfileMode {
    Aldram,
    Ava,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AvaDocument {
    pub temp_c: f64,
    pub refresh_ms: f64,
    /// Timings to apply, one clock above the minimum passing combination.
    pub timings: TimingParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pre_margin: Option<TimingParams>,
    pub region: TestRegion,
}

/// Output of `profile`, accepted by `run` as an AL-DRAM table or AVA profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileDocument {
    pub schema_version: u32,
    pub seed: u64,
    pub mode: ProfileMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chip: Option<ChipPreset>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aldram: Option<TimingTable>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ava: Option<AvaDocument>,
}

pub fn read_profile(p: &Path) -> Result<ProfileDocument> {
    let text = fs::read_to_string(p).with_context(|| format!("cannot read profile {}", p.display()))?;
    let doc: ProfileDocument =
        toml::from_str(&text).map_err(|e| anyhow!("{}", e.to_string().trim_end())).with_context(|| format!("profile {}", p.display()))?;
    if doc.schema_version != SCHEMA_VERSION {
        bail!("profile {}: unsupported schema_version {}", p.display(), doc.schema_version);
    }
    Ok(doc)
}

fn grid(ctx: &Ctx, standard: &TimingParams, default: GridName) -> Result<TimingGrid> {
    ctx.exp.cfg.profile.grid.unwrap_or(GridSpec::Named(default)).resolve(standard).context("profile: invalid grid")
}

fn identify(ctx: &Ctx, chip: &ChipModel) -> Result<TimingTable> {
    let spec = &ctx.exp.cfg.profile;
    let scope = spec.scope.resolve(chip.topology()).context("profile")?;
    let digest = ProfileDigest::build(chip, &scope, &StressSet::default(), ctx.exec);
    let refresh = safe_refresh_intervals(chip, &digest, &spec.refresh_search)?;
    info!("safe refresh intervals: read {} ms, write {} ms", refresh.safe_refresh_read_ms, refresh.safe_refresh_write_ms);
    let cfg = Identify { temps_c: spec.temps_c.clone(), grid: grid(ctx, chip.standard(), GridName::Aldram)?, refresh };
    Ok(identify_timing_table(chip, &digest, &cfg, ctx.exec)?)
}

fn profile_ava(ctx: &Ctx, chip: &ChipModel) -> Result<AvaDocument> {
    let exp = &ctx.exp;
    let temp_c = match exp.cfg.profile.temp_c {
        Some(t) => t,
        None => exp.max_temp()?,
    };
    let refresh_ms = exp.cfg.refresh.ms;
    let region = select_test_region(chip);
    let digest = ProfileDigest::build(chip, &region.scope(chip.topology()), &StressSet::default(), ctx.exec);
    let g = match exp.cfg.profile.grid {
        Some(_) => grid(ctx, chip.standard(), GridName::Ava)?,
        None => ava_grid(chip.standard()),
    };
    let p = ava_profile(chip, &digest, temp_c, refresh_ms, &g);
    if p.pre_margin.is_none() {
        warn!("no grid combination passed the test region; using standard timings");
    }
    Ok(AvaDocument { temp_c, refresh_ms, timings: p.timings, pre_margin: p.pre_margin, region })
}

pub fn profile(ctx: &Ctx, mode: ProfileMode) -> Result<Status> {
    let exp = &ctx.exp;
    let chip = exp.require_chip()?;
    let mut doc = ProfileDocument {
        schema_version: SCHEMA_VERSION,
        seed: exp.seed(),
        mode,
        chip: exp.cfg.chip.as_ref().map(|c| c.preset),
        aldram: None,
        ava: None,
    };
    match mode {
        ProfileMode::Aldram => doc.aldram = Some(identify(ctx, &chip)?),
        ProfileMode::Ava => doc.ava = Some(profile_ava(ctx, &chip)?),
    }
    ctx.write(PROFILE_FILE, toml::to_string(&doc)?.as_bytes())?;
    Ok(Status::Ok)
}

// ----------------------------------------------------------------- sweep

pub const SWEEP_COLUMNS: [&str; 11] =
    ["seed", "point", "trcd_ns", "tras_ns", "twr_ns", "trp_ns", "temp_c", "refresh_ms", "metric", "index", "value"];

/// Long-format error cube: per point one `errors` row, `rows_per_mat`
/// `row_histogram` rows and 64 `burst_bit` rows.
pub fn sweep_cmd(ctx: &Ctx) -> Result<Status> {
    let exp = &ctx.exp;
    let chip = exp.require_chip()?;
    let spec = &exp.cfg.sweep;
    let base = exp.timings(Some(&chip));
    let timings = match spec.param {
        Some(p) => {
            if spec.values_ns.is_empty() {
                bail!("sweep: param {} given without values_ns", p.name());
            }
            spec.values_ns.iter().map(|&v| base.with(p, Ps::from_ns(v))).collect()
        }
        None if !spec.values_ns.is_empty() => bail!("sweep: values_ns given without param"),
        None => vec![base],
    };
    let axes = SweepAxes { timings, temps_c: spec.temps_c.clone(), refresh_ms: spec.refresh_ms.clone() };
    if axes.is_empty() {
        bail!("sweep: every axis needs at least one value");
    }
    let scope = spec.scope.resolve(chip.topology()).context("sweep")?;
    let tmpl = SweepTemplate { op: spec.op, pattern: spec.pattern, iterations: spec.iterations };
    let res = sweep(&chip, &axes, &tmpl, &scope, ctx.exec)?;
    let seed = exp.seed().to_string();
    let csv = csv_bytes(&SWEEP_COLUMNS, |w| {
        for (k, p) in res.points.iter().enumerate() {
            let t = &p.timings;
            let head = [
                seed.clone(),
                k.to_string(),
                t.trcd().as_ns().to_string(),
                t.tras().as_ns().to_string(),
                t.twr().as_ns().to_string(),
                t.trp().as_ns().to_string(),
                p.temp_c.to_string(),
                p.refresh_ms.to_string(),
            ];
            let mut emit = |metric: &str, i: usize, v: u64| {
                let mut rec = head.to_vec();
                rec.extend([metric.to_string(), i.to_string(), v.to_string()]);
                w.write_record(&rec)
            };
            emit("errors", 0, p.errors)?;
            for (i, v) in res.row_histogram(k).into_iter().enumerate() {
                emit("row_histogram", i, v)?;
            }
            for (i, &v) in p.burst_bits.iter().enumerate() {
                emit("burst_bit", i, v)?;
            }
        }
        Ok(())
    })?;
    ctx.write(SWEEP_FILE, &csv)?;
    Ok(Status::Ok)
}

// ---------------------------------------------------------- shuffle-eval

pub const SHUFFLE_COLUMNS: [&str; 9] = [
    "seed",
    "map",
    "lines",
    "total_errors",
    "corrected",
    "uncorrectable",
    "multi_bit_codewords",
    "corrected_frac",
    "newly_corrected_frac",
];

pub fn shuffle_eval(ctx: &Ctx, fail_on_uncorrectable: bool) -> Result<Status> {
    let exp = &ctx.exp;
    let chip = exp.require_chip()?;
    let spec = &exp.cfg.shuffle_eval;
    if spec.lines == 0 {
        bail!("shuffle_eval: lines must be positive");
    }
    let map = spec.map.resolve()?;
    let setup = CorrectionSetup {
        timings: spec.timings.map_or_else(|| exp.timings(Some(&chip)), |t| t.resolve()),
        temp_c: match spec.temp_c {
            Some(t) => t,
            None => exp.constant_temp()?,
        },
        refresh_ms: spec.refresh_ms.unwrap_or(exp.cfg.refresh.ms),
        stress: Stress::new(spec.op),
        lines: spec.lines,
        seed: exp.seed(),
    };
    let c = compare_shuffle(&chip, &setup, &map, ctx.exec);
    let frac = |s: &CorrectionStats| if s.total_errors == 0 { 0.0 } else { s.corrected as f64 / s.total_errors as f64 };
    let seed = exp.seed().to_string();
    let csv = csv_bytes(&SHUFFLE_COLUMNS, |w| {
        for (name, s, newly) in [("identity", &c.identity, 0.0), (spec.map.name(), &c.shuffled, c.newly_corrected_fraction())] {
            w.write_record([
                seed.clone(),
                name.to_string(),
                s.lines.to_string(),
                s.total_errors.to_string(),
                s.corrected.to_string(),
                s.uncorrectable.to_string(),
                s.multi_bit_codewords.to_string(),
                frac(s).to_string(),
                newly.to_string(),
            ])?;
        }
        Ok(())
    })?;
    ctx.write(SHUFFLE_FILE, &csv)?;
    let u = c.shuffled.uncorrectable;
    if fail_on_uncorrectable && u > 0 {
        return Ok(Status::Uncorrectable(format!("{u} uncorrectable error bit(s) remain after shuffling")));
    }
    Ok(Status::Ok)
}
