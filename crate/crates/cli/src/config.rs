//! Experiment configuration: a sectioned TOML document with a versioned
//! schema. Relative paths inside a config resolve against the config file's
//! directory, and every referenced file must exist when the config is loaded.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use dramlat::aldram::{RefreshSearch, TemperatureTrace, TimingGrid, DEFAULT_ENFORCE_INTERVAL_MS, DEFAULT_TEMPS_C};
use dramlat::ava::{ava_grid, ShuffleMap};
use dramlat::dram::{MappingScheme, Param, RowPolicy, TimingParams, Topology};
use dramlat::policies::PolicyKind;
use dramlat::presets::ChipPreset;
use dramlat::sim::{CoreModel, SimConfig};
use dramlat::tldram::DeriveMode;
use dramlat::variation::{CellScope, ChipModel, Op, Pattern, VariationParams};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

fn default_seed() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    /// Every random choice derives from this seed, including the chip's.
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub refresh: RefreshSpec,
    #[serde(default)]
    pub temperature: TemperatureSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chip: Option<ChipSection>,
    /// Only allowed without a chip; a chip brings its own organization.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topology: Option<Topology>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timings: Option<TimingSpec>,
    #[serde(default)]
    pub mechanism: MechanismSpec,
    #[serde(default)]
    pub controller: ControllerSpec,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub sweep: SweepSpec,
    #[serde(default)]
    pub profile: ProfileSpec,
    #[serde(default)]
    pub shuffle_eval: ShuffleEvalSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChipSection {
    pub preset: ChipPreset,
    /// Replaces the preset's variation parameters; its `seed` is overridden
    /// by the top-level seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variation: Option<VariationParams>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimingPreset {
    Ddr3_1066,
    Ddr3_1600,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PresetRef {
    pub preset: TimingPreset,
}

/// Either `preset = "ddr3_1066"` or explicit `*_ns` values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TimingSpec {
    Preset(PresetRef),
    Explicit(TimingParams),
}

impl TimingSpec {
    pub fn resolve(&self) -> TimingParams {
        match self {
            TimingSpec::Preset(PresetRef { preset: TimingPreset::Ddr3_1066 }) => TimingParams::ddr3_1066(),
            TimingSpec::Preset(PresetRef { preset: TimingPreset::Ddr3_1600 }) => TimingParams::ddr3_1600(),
            TimingSpec::Explicit(t) => *t,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlacementKind {
    #[default]
    Inclusive,
    Exclusive,
    Static,
    Profile,
}

fn default_near_rows() -> u32 {
    32
}

fn default_policy() -> PolicyKind {
    PolicyKind::Bbc
}

fn default_interval() -> u64 {
    DEFAULT_ENFORCE_INTERVAL_MS
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum MechanismSpec {
    #[default]
    Baseline,
    Tldram {
        #[serde(default = "default_near_rows")]
        near_rows: u32,
        #[serde(default)]
        placement: PlacementKind,
        #[serde(default = "default_policy")]
        policy: PolicyKind,
        #[serde(default)]
        derive: DeriveMode,
    },
    /// Without `table`, the timing table is identified from the chip.
    Aldram {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        table: Option<PathBuf>,
        #[serde(default = "default_interval")]
        enforce_interval_ms: u64,
    },
    /// Without `profile`, the chip's test region is profiled.
    Ava {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        profile: Option<PathBuf>,
        #[serde(default)]
        shuffle: MapSpec,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapName {
    Identity,
    #[default]
    Rotation,
}

/// A named shuffle map or an explicit 8x8 matrix of burst indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MapSpec {
    Named(MapName),
    Matrix(Vec<Vec<u8>>),
}

impl Default for MapSpec {
    fn default() -> Self {
        MapSpec::Named(MapName::Rotation)
    }
}

impl MapSpec {
    pub fn resolve(&self) -> Result<ShuffleMap> {
        Ok(match self {
            MapSpec::Named(MapName::Identity) => ShuffleMap::identity(),
            MapSpec::Named(MapName::Rotation) => ShuffleMap::rotation(),
            MapSpec::Matrix(m) => ShuffleMap::try_from(m.clone()).context("invalid shuffle matrix")?,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            MapSpec::Named(MapName::Identity) => "identity",
            MapSpec::Named(MapName::Rotation) => "rotation",
            MapSpec::Matrix(_) => "custom",
        }
    }
}

/// Constant temperature (55 degC when nothing is set) or a temperature log.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemperatureSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constant_c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<PathBuf>,
}

pub const DEFAULT_TEMP_C: f64 = 55.0;

fn yes() -> bool {
    true
}

fn default_refresh_ms() -> f64 {
    64.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefreshSpec {
    #[serde(default = "yes")]
    pub enabled: bool,
    #[serde(default = "default_refresh_ms")]
    pub ms: f64,
}

impl Default for RefreshSpec {
    fn default() -> Self {
        RefreshSpec { enabled: true, ms: default_refresh_ms() }
    }
}

fn default_write_queue() -> usize {
    64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSpec {
    #[serde(default)]
    pub row_policy: RowPolicy,
    #[serde(default)]
    pub mapping: MappingScheme,
    #[serde(default = "default_write_queue")]
    pub write_queue: usize,
    #[serde(default)]
    pub core: CoreModel,
}

impl Default for ControllerSpec {
    fn default() -> Self {
        ControllerSpec {
            row_policy: RowPolicy::default(),
            mapping: MappingScheme::default(),
            write_queue: default_write_queue(),
            core: CoreModel::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

/// Restriction of a cell sweep; absent lists cover the whole chip.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScopeSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chips: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub banks: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subarrays: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<Vec<u32>>,
}

impl ScopeSpec {
    pub fn resolve(&self, topo: &Topology) -> Result<CellScope> {
        let check = |name: &str, v: &Option<Vec<u32>>, n: u32| -> Result<()> {
            if let Some(v) = v {
                if v.is_empty() {
                    bail!("scope {name} list is empty");
                }
                if let Some(bad) = v.iter().find(|&&x| x >= n) {
                    bail!("scope {name} index {bad} out of range (< {n})");
                }
            }
            Ok(())
        };
        check("chips", &self.chips, topo.chips_per_rank)?;
        check("banks", &self.banks, topo.banks_total() as u32)?;
        check("subarrays", &self.subarrays, topo.subarrays_per_bank)?;
        check("rows", &self.rows, topo.rows_per_subarray)?;
        let mut s = CellScope::full(topo);
        if let Some(v) = &self.chips {
            s = s.with_chips(v.clone());
        }
        if let Some(v) = &self.banks {
            s = s.with_banks(v.clone());
        }
        if let Some(v) = &self.subarrays {
            s = s.with_subarrays(v.clone());
        }
        if let Some(v) = &self.rows {
            s = s.with_rows(v.clone());
        }
        Ok(s)
    }
}

fn default_temps() -> Vec<f64> {
    vec![DEFAULT_TEMP_C]
}

fn default_refresh_axis() -> Vec<f64> {
    vec![64.0]
}

fn default_iterations() -> u32 {
    1
}

fn default_op() -> Op {
    Op::Read
}

fn default_pattern() -> Pattern {
    Pattern::P0000
}

/// Axes and test conditions of `sweep`. Points are every timing set (the
/// base timings with `param` at each of `values_ns`, or the base timings
/// alone) at every temperature and refresh interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default = "default_op")]
    pub op: Op,
    #[serde(default = "default_pattern")]
    pub pattern: Pattern,
    #[serde(default = "default_iterations")]
    pub iterations: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub param: Option<Param>,
    #[serde(default)]
    pub values_ns: Vec<f64>,
    #[serde(default = "default_temps")]
    pub temps_c: Vec<f64>,
    #[serde(default = "default_refresh_axis")]
    pub refresh_ms: Vec<f64>,
    #[serde(default)]
    pub scope: ScopeSpec,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            op: default_op(),
            pattern: default_pattern(),
            iterations: default_iterations(),
            param: None,
            values_ns: Vec::new(),
            temps_c: default_temps(),
            refresh_ms: default_refresh_axis(),
            scope: ScopeSpec::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridName {
    Aldram,
    Ava,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SteppedGrid {
    pub trcd: [f64; 2],
    pub tras: [f64; 2],
    pub twr: [f64; 2],
    pub trp: [f64; 2],
    pub step_ns: f64,
}

/// A named grid or inclusive `[lo, hi]` ranges in ns with a common step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    Named(GridName),
    Stepped(SteppedGrid),
}

impl GridSpec {
    pub fn resolve(&self, standard: &TimingParams) -> Result<TimingGrid> {
        Ok(match self {
            GridSpec::Named(GridName::Aldram) => TimingGrid::aldram(standard),
            GridSpec::Named(GridName::Ava) => ava_grid(standard),
            GridSpec::Stepped(g) => {
                let r = |v: [f64; 2]| (v[0], v[1]);
                TimingGrid::stepped([r(g.trcd), r(g.tras), r(g.twr), r(g.trp)], g.step_ns, standard)?
            }
        })
    }
}

fn default_profile_temps() -> Vec<f64> {
    DEFAULT_TEMPS_C.to_vec()
}

/// Settings of `profile`. AL-DRAM identification uses `temps_c`, `scope` and
/// `refresh_search`; AVA profiling uses `temp_c` and the refresh interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSpec {
    #[serde(default = "default_profile_temps")]
    pub temps_c: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temp_c: Option<f64>,
    #[serde(default)]
    pub scope: ScopeSpec,
    #[serde(default)]
    pub refresh_search: RefreshSearch,
}

impl Default for ProfileSpec {
    fn default() -> Self {
        ProfileSpec {
            temps_c: default_profile_temps(),
            grid: None,
            temp_c: None,
            scope: ScopeSpec::default(),
            refresh_search: RefreshSearch::default(),
        }
    }
}

fn default_lines() -> u64 {
    1000
}

/// Operating point of `shuffle-eval`; unset values fall back to the base
/// timings, the configured temperature and the refresh interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShuffleEvalSpec {
    #[serde(default = "default_lines")]
    pub lines: u64,
    #[serde(default)]
    pub map: MapSpec,
    #[serde(default = "default_op")]
    pub op: Op,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timings: Option<TimingSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temp_c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refresh_ms: Option<f64>,
}

impl Default for ShuffleEvalSpec {
    fn default() -> Self {
        ShuffleEvalSpec { lines: default_lines(), map: MapSpec::default(), op: default_op(), timings: None, temp_c: None, refresh_ms: None }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| anyhow!("{}", e.to_string().trim_end()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            bail!("unsupported schema_version {} (expected {SCHEMA_VERSION})", cfg.schema_version);
        }
        if cfg.temperature.constant_c.is_some() && cfg.temperature.trace.is_some() {
            bail!("temperature: set either constant_c or trace, not both");
        }
        if cfg.chip.is_some() && cfg.topology.is_some() {
            bail!("topology: the chip preset defines the organization; remove the [topology] section");
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Files the config refers to, as written.
    pub fn referenced_files(&self) -> Vec<&Path> {
        let mut v: Vec<&Path> = Vec::new();
        if let Some(p) = &self.temperature.trace {
            v.push(p);
        }
        match &self.mechanism {
            MechanismSpec::Aldram { table: Some(p), .. } => v.push(p),
            MechanismSpec::Ava { profile: Some(p), .. } => v.push(p),
            _ => {}
        }
        v
    }
}

/// A loaded config with its seed override applied.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub cfg: ExperimentConfig,
    pub base_dir: PathBuf,
}

impl Experiment {
    pub fn load(path: &Path, seed: Option<u64>) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let mut cfg = ExperimentConfig::parse(&text).with_context(|| format!("config {}", path.display()))?;
        if let Some(s) = seed {
            cfg.seed = s;
        }
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let exp = Experiment { cfg, base_dir };
        for f in exp.cfg.referenced_files() {
            let p = exp.resolve(f);
            if !p.is_file() {
                bail!("config {}: referenced file {} does not exist", path.display(), p.display());
            }
        }
        Ok(exp)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn seed(&self) -> u64 {
        self.cfg.seed
    }

    pub fn chip(&self) -> Result<Option<ChipModel>> {
        let Some(c) = &self.cfg.chip else { return Ok(None) };
        let seed = self.seed();
        let params = match &c.variation {
            Some(v) => VariationParams { seed, ..v.clone() },
            None => c.preset.params(seed),
        };
        let chip = ChipModel::new(c.preset.topology(), params, c.preset.nominal(), c.preset.standard())
            .context("chip: invalid variation parameters")?;
        Ok(Some(chip))
    }

    pub fn require_chip(&self) -> Result<ChipModel> {
        self.chip()?.ok_or_else(|| anyhow!("this command needs a [chip] section"))
    }

    pub fn topology(&self, chip: Option<&ChipModel>) -> Topology {
        match (chip, &self.cfg.topology) {
            (Some(c), _) => c.topology().clone(),
            (None, Some(t)) => t.clone(),
            (None, None) => Topology::default(),
        }
    }

    /// Explicit timings, else the chip's datasheet timings, else DDR3-1066.
    pub fn timings(&self, chip: Option<&ChipModel>) -> TimingParams {
        match (&self.cfg.timings, chip) {
            (Some(t), _) => t.resolve(),
            (None, Some(c)) => *c.standard(),
            (None, None) => TimingParams::ddr3_1066(),
        }
    }

    pub fn sim_config(&self, chip: Option<&ChipModel>) -> Result<SimConfig> {
        let ctl = &self.cfg.controller;
        let cfg = SimConfig {
            topology: self.topology(chip),
            timings: self.timings(chip),
            mapping: ctl.mapping,
            row_policy: ctl.row_policy,
            core: ctl.core,
            write_queue: ctl.write_queue,
            refresh: self.cfg.refresh.enabled,
            refresh_ms: self.cfg.refresh.ms,
            temp_c: self.constant_temp()?,
            ..SimConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn temperature(&self) -> Result<TemperatureTrace> {
        match (&self.cfg.temperature.trace, self.cfg.temperature.constant_c) {
            (Some(p), _) => {
                let p = self.resolve(p);
                let text = fs::read_to_string(&p).with_context(|| format!("cannot read temperature trace {}", p.display()))?;
                TemperatureTrace::parse(&text).with_context(|| format!("temperature trace {}", p.display()))
            }
            (None, c) => Ok(TemperatureTrace::constant(c.unwrap_or(DEFAULT_TEMP_C), 0.0)?),
        }
    }

    /// The configured constant, or the first sample of a temperature trace.
    pub fn constant_temp(&self) -> Result<f64> {
        Ok(self.temperature()?.samples()[0].1)
    }

    /// Worst case of the temperature source.
    pub fn max_temp(&self) -> Result<f64> {
        Ok(self.temperature()?.samples().iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max))
    }
}
