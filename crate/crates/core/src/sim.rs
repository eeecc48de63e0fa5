//! Trace-driven simulation.
//!
//! Cores follow a gap-and-block model: each retires `nonmem_ipc` instructions
//! per CPU cycle between memory requests, keeps at most `mshr_limit` reads in
//! flight and posts writes into a bounded queue. An FR-FCFS controller drives
//! the per-bank state machines. Mechanisms act when a row is activated:
//! TL-DRAM picks the physical row and schedules row copies, AL-DRAM and AVA
//! pick the timing set, and reads can be checked against a chip model and
//! decoded through SECDED.
//!
//! Time advances in controller cycles and skips ahead to the next event
//! whenever nothing can issue.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::aldram::{TemperatureTrace, Timeline};
use crate::ava::{apply_shuffle, tally_line, Line, ShuffleMap, BURSTS, CHIPS};
use crate::dram::{
    Address, AddressMap, BankState, Command, CommandKind, Cycle, CycleTimings, LoggedCommand, MappingScheme,
    Ps, RowPolicy, TimingParams, Topology, DEFAULT_TRFC, REFRESH_COMMANDS_PER_WINDOW,
};
use crate::error::{Error, Result};
use crate::policies::{
    build_profile_mapping, exclusive_swap, is_wait_inducing, wait_saving, AccessClass, Action, CacheState,
    ExclusiveMap, PolicyKind, ProfileMapping,
};
use crate::tldram::{command_energy_with, EnergyModel, SegmentConfig};
use crate::variation::{CellCoords, ChipModel, FailKind, Op, Outcome, Stress};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TraceRequest {
    /// Non-memory instructions retired before this request.
    pub gap: u64,
    pub op: Op,
    pub addr: u64,
}

/// One core's post-LLC request stream.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Trace {
    pub requests: Vec<TraceRequest>,
}

impl Trace {
    /// Parse `<gap> <R|W> <hex address>` lines. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Trace> {
        let mut requests = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |reason: String| Error::Trace { line: i + 1, reason };
            let f: Vec<&str> = line.split_whitespace().collect();
            let [g, o, a] = f[..] else {
                return Err(err(format!("expected `<gap> <R|W> <hex address>`, got `{line}`")));
            };
            let gap = g.parse::<u64>().map_err(|e| err(format!("bad gap `{g}`: {e}")))?;
            let op = match o {
                "R" | "r" => Op::Read,
                "W" | "w" => Op::Write,
                _ => return Err(err(format!("bad operation `{o}`, expected R or W"))),
            };
            let hex = a.strip_prefix("0x").or_else(|| a.strip_prefix("0X")).unwrap_or(a);
            let addr = u64::from_str_radix(hex, 16).map_err(|e| err(format!("bad address `{a}`: {e}")))?;
            requests.push(TraceRequest { gap, op, addr });
        }
        Ok(Trace { requests })
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for r in &self.requests {
            let op = if r.op == Op::Read { 'R' } else { 'W' };
            s.push_str(&format!("{} {} {:#x}\n", r.gap, op, r.addr));
        }
        s
    }

    pub fn len(&self) -> usize {
        self.requests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.requests.is_empty()
    }

    pub fn reads(&self) -> usize {
        self.requests.iter().filter(|r| r.op == Op::Read).count()
    }

    /// Instructions the trace stands for: every gap plus the request itself.
    pub fn instructions(&self) -> u64 {
        self.requests.iter().map(|r| r.gap + 1).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoreModel {
    pub nonmem_ipc: u32,
    pub mshr_limit: u32,
    /// CPU clock over controller clock.
    pub cpu_cycles_per_mem_cycle: u32,
}

impl Default for CoreModel {
    fn default() -> Self {
        CoreModel { nonmem_ipc: 3, mshr_limit: 8, cpu_cycles_per_mem_cycle: 4 }
    }
}

impl CoreModel {
    pub fn validate(&self) -> Result<()> {
        if self.nonmem_ipc == 0 || self.cpu_cycles_per_mem_cycle == 0 {
            return Err(Error::config("core IPC and clock ratio must be positive"));
        }
        if self.mshr_limit == 0 {
            return Err(Error::config("a core needs at least one MSHR"));
        }
        Ok(())
    }

    fn slots_per_mem_cycle(&self) -> u64 {
        self.nonmem_ipc as u64 * self.cpu_cycles_per_mem_cycle as u64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub topology: Topology,
    /// Timings of an unsegmented, unadapted module.
    pub timings: TimingParams,
    pub mapping: MappingScheme,
    pub row_policy: RowPolicy,
    pub core: CoreModel,
    pub write_queue: usize,
    pub refresh: bool,
    pub refresh_ms: f64,
    pub trfc: Ps,
    /// Temperature for error injection when the mechanism has no trace.
    pub temp_c: f64,
    pub energy: EnergyModel,
    /// Keep the full command log in the result.
    pub record_commands: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            topology: Topology::default(),
            timings: TimingParams::ddr3_1066(),
            mapping: MappingScheme::RowInterleaved,
            row_policy: RowPolicy::Closed,
            core: CoreModel::default(),
            write_queue: 64,
            refresh: true,
            refresh_ms: 64.0,
            trfc: DEFAULT_TRFC,
            temp_c: 55.0,
            energy: EnergyModel::default(),
            record_commands: false,
        }
    }
}

impl SimConfig {
    /// Configuration for a chip model's organization and datasheet timings.
    pub fn for_chip(chip: &ChipModel) -> Self {
        SimConfig { topology: chip.topology().clone(), timings: *chip.standard(), ..SimConfig::default() }
    }

    pub fn validate(&self) -> Result<()> {
        self.topology.validate()?;
        self.core.validate()?;
        if self.write_queue == 0 {
            return Err(Error::config("write queue must hold at least one request"));
        }
        if self.refresh && !(self.refresh_ms > 0.0 && self.refresh_ms.is_finite()) {
            return Err(Error::config("refresh interval must be positive"));
        }
        Ok(())
    }
}

/// Where rows live under TL-DRAM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    /// No caching: external row `r` is physical row `r`.
    Static,
    /// Near rows hold copies of far rows; far rows are the visible rows.
    Inclusive(PolicyKind),
    /// Rows migrate between segments by swapping through a dummy row.
    Exclusive(PolicyKind),
    /// The most accessed rows of the traces are placed near.
    Profile,
}

impl Placement {
    pub fn name(self) -> String {
        let p = |k: PolicyKind| format!("{k:?}").to_lowercase();
        match self {
            Placement::Static => "static".into(),
            Placement::Inclusive(k) => p(k),
            Placement::Exclusive(k) => format!("exclusive-{}", p(k)),
            Placement::Profile => "profile".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Mechanism {
    Baseline,
    TlDram { segments: SegmentConfig, placement: Placement },
    AlDram { timeline: Timeline, temperature: TemperatureTrace },
    /// Profiled timings on the data rows; `reserved_rows` (the latency test
    /// region) are skipped by the row mapping.
    Ava { timings: TimingParams, shuffle: ShuffleMap, reserved_rows: Vec<u32> },
}

impl Mechanism {
    pub fn name(&self) -> String {
        match self {
            Mechanism::Baseline => "baseline".into(),
            Mechanism::TlDram { placement, .. } => format!("tldram-{}", placement.name()),
            Mechanism::AlDram { .. } => "aldram".into(),
            Mechanism::Ava { .. } => "ava".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Stats {
    pub instructions: u64,
    /// CPU cycles until the last request completed.
    pub cycles: u64,
    pub ipc_proxy: f64,
    pub reads: u64,
    pub writes: u64,
    pub row_buffer_hits: u64,
    pub near_hits: u64,
    pub far_accesses: u64,
    pub avg_read_latency_ns: f64,
    pub energy_units: f64,
    pub caching_transfers: u64,
    /// Failing bits observed on reads.
    pub errors_injected: u64,
    pub timing_errors: u64,
    pub retention_errors: u64,
    pub errors_corrected: u64,
    pub errors_uncorrectable: u64,
}

impl Stats {
    fn classified(&self) -> u64 {
        self.row_buffer_hits + self.near_hits + self.far_accesses
    }

    fn frac(&self, n: u64) -> f64 {
        match self.classified() {
            0 => 0.0,
            d => n as f64 / d as f64,
        }
    }

    pub fn row_buffer_frac(&self) -> f64 {
        self.frac(self.row_buffer_hits)
    }

    pub fn near_frac(&self) -> f64 {
        self.frac(self.near_hits)
    }

    pub fn far_frac(&self) -> f64 {
        self.frac(self.far_accesses)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub per_core: Vec<Stats>,
    pub aggregate: Stats,
    /// Controller cycles simulated.
    pub mem_cycles: Cycle,
    /// Every issued command, when `record_commands` is set. REF appears once
    /// per bank.
    pub commands: Vec<LoggedCommand>,
}

/// Sum of per-core IPC ratios against a baseline run.
pub fn weighted_speedup(ipc: &[f64], baseline: &[f64]) -> Result<f64> {
    if ipc.len() != baseline.len() {
        return Err(Error::Config(format!("{} IPC values against {} baselines", ipc.len(), baseline.len())));
    }
    if baseline.iter().any(|b| !(*b > 0.0)) {
        return Err(Error::config("baseline IPC must be positive"));
    }
    Ok(ipc.iter().zip(baseline).map(|(a, b)| a / b).sum())
}

/// Energy of one logged command. REF is logged per bank but costed per
/// rank, so each bank carries its share.
fn logged_energy(e: &EnergyModel, cmd: &Command, segs: &SegmentConfig, topo: &Topology) -> f64 {
    let x = command_energy_with(e, cmd, segs, topo);
    if cmd.kind == CommandKind::Ref {
        x / topo.banks_per_rank as f64
    } else {
        x
    }
}

/// Total energy of a command log.
pub fn account_energy(log: &[LoggedCommand], segs: &SegmentConfig, topo: &Topology, e: &EnergyModel) -> f64 {
    log.iter().map(|l| logged_energy(e, &l.cmd, segs, topo)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueuedRequest {
    /// Arrival order; smaller is older.
    pub id: u64,
    pub arrival: Cycle,
    pub subarray: u32,
    pub row: u32,
    pub is_write: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Selection {
    pub bank: usize,
    pub kind: CommandKind,
    pub request: Option<u64>,
}

/// FR-FCFS within one bank: (command, queue index, class, age). Lower class
/// wins; row hits before row opens and closes, idle closes last.
fn bank_choice(queue: &[QueuedRequest], open: Option<(u32, u32)>, is_open: bool, policy: RowPolicy) -> Option<(CommandKind, Option<usize>, u8, u64)> {
    if let Some(key) = open {
        if let Some(i) = queue.iter().position(|q| (q.subarray, q.row) == key) {
            let k = if queue[i].is_write { CommandKind::Wr } else { CommandKind::Rd };
            return Some((k, Some(i), 1, queue[i].id));
        }
    }
    if let Some(q) = queue.first() {
        let k = if is_open { CommandKind::Pre } else { CommandKind::Act };
        return Some((k, Some(0), 2, q.id));
    }
    if is_open && policy == RowPolicy::Closed {
        return Some((CommandKind::Pre, None, 3, u64::MAX));
    }
    None
}

/// The command FR-FCFS issues at `now`, or `None` when nothing is legal this
/// cycle. Column commands to open rows come first, then the oldest request's
/// ACT or PRE; under the closed-row policy idle banks are precharged last.
pub fn frfcfs_select(queues: &[Vec<QueuedRequest>], banks: &[BankState], timings: &CycleTimings, policy: RowPolicy, now: Cycle) -> Option<Selection> {
    let mut best: Option<((u8, u64, usize), Selection)> = None;
    for (b, (q, st)) in queues.iter().zip(banks).enumerate() {
        let Some((kind, qi, class, age)) = bank_choice(q, st.open_row(), st.is_open(), policy) else { continue };
        let (sub, row) = match (qi, st.open_row()) {
            (Some(i), _) if kind != CommandKind::Pre => (q[i].subarray, q[i].row),
            (_, Some(o)) => o,
            _ => (0, 0),
        };
        let addr = Address { subarray: sub, row_external: row, row_internal: row, ..Address::default() };
        let cmd = Command::new(kind, addr, now);
        if st.earliest_legal_time(&cmd, timings, now) != Ok(now) {
            continue;
        }
        let key = (class, age, b);
        if best.as_ref().is_none_or(|(k, _)| key < *k) {
            best = Some((key, Selection { bank: b, kind, request: qi.map(|i| q[i].id) }));
        }
    }
    best.map(|(_, s)| s)
}

/// Synthetic workloads with known locality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Workload {
    /// 90% of row visits go to a small hot set (24 rows in each of two
    /// subarrays per bank), the rest to random rows anywhere; each visit
    /// touches 1 to 4 lines back to back.
    HighLocality,
    /// Back-to-back single-line accesses to uniformly random rows.
    Random,
}

impl Workload {
    pub const ALL: [Workload; 2] = [Workload::HighLocality, Workload::Random];

    pub fn name(self) -> &'static str {
        match self {
            Workload::HighLocality => "high_locality",
            Workload::Random => "random",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|w| w.name() == s)
    }

    /// `len` requests over the rows every placement can address: the top
    /// sixteenth of each subarray is left for near-segment copies.
    pub fn generate(self, topo: &Topology, mapping: MappingScheme, len: usize, seed: u64) -> Result<Trace> {
        let map = AddressMap::new(topo.clone(), mapping, None)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5157_0000 ^ self as u64);
        let rows = (topo.rows_per_subarray - topo.rows_per_subarray / 16).max(1);
        let banks = topo.channels * topo.ranks_per_channel * topo.banks_per_rank;
        let locate = |flat: u32| {
            let bank = flat % topo.banks_per_rank;
            let rank = flat / topo.banks_per_rank % topo.ranks_per_channel;
            let channel = flat / (topo.banks_per_rank * topo.ranks_per_channel);
            (channel, rank, bank)
        };
        let addr = |flat: u32, sub: u32, row: u32, column: u32| {
            let (channel, rank, bank) = locate(flat);
            map.encode(&Address { channel, rank, bank, subarray: sub, row_external: row, row_internal: row, column, byte_offset: 0 })
        };
        let mut requests = Vec::with_capacity(len);
        match self {
            Workload::HighLocality => {
                let subs = topo.subarrays_per_bank.min(2);
                let hot_per_sub = rows.min(24);
                let mut hot = Vec::new();
                for b in 0..banks {
                    let mut chosen_subs: Vec<u32> = Vec::new();
                    while chosen_subs.len() < subs as usize {
                        let s = rng.random_range(0..topo.subarrays_per_bank);
                        if !chosen_subs.contains(&s) {
                            chosen_subs.push(s);
                        }
                    }
                    for s in chosen_subs {
                        let mut picked: Vec<u32> = Vec::new();
                        while picked.len() < hot_per_sub as usize {
                            let r = rng.random_range(0..rows);
                            if !picked.contains(&r) {
                                picked.push(r);
                            }
                        }
                        hot.extend(picked.into_iter().map(|r| (b, s, r)));
                    }
                }
                while requests.len() < len {
                    let (b, s, r) = if rng.random_bool(0.9) {
                        hot[rng.random_range(0..hot.len())]
                    } else {
                        (rng.random_range(0..banks), rng.random_range(0..topo.subarrays_per_bank), rng.random_range(0..rows))
                    };
                    let run = rng.random_range(1..=4u32).min(topo.columns_per_row);
                    let col0 = rng.random_range(0..topo.columns_per_row);
                    for k in 0..run {
                        if requests.len() == len {
                            break;
                        }
                        let op = if rng.random_bool(0.2) { Op::Write } else { Op::Read };
                        let gap = if k == 0 { rng.random_range(0..24) } else { rng.random_range(0..4) };
                        requests.push(TraceRequest { gap, op, addr: addr(b, s, r, (col0 + k) % topo.columns_per_row) });
                    }
                }
            }
            Workload::Random => {
                while requests.len() < len {
                    let a = addr(
                        rng.random_range(0..banks),
                        rng.random_range(0..topo.subarrays_per_bank),
                        rng.random_range(0..rows),
                        rng.random_range(0..topo.columns_per_row),
                    );
                    let op = if rng.random_bool(0.25) { Op::Write } else { Op::Read };
                    requests.push(TraceRequest { gap: rng.random_range(0..4), op, addr: a });
                }
            }
        }
        Ok(Trace { requests })
    }
}

// ---------------------------------------------------------------------------
// Engine internals.

#[derive(Debug, Clone, Copy)]
struct Opening {
    tag: u32,
    req: u64,
    near: bool,
}

/// One command of a bank-local script (row copies, then possibly the
/// activation serving a request).
#[derive(Debug, Clone, Copy)]
struct Step {
    kind: CommandKind,
    sub: u32,
    row: u32,
    opens: Option<Opening>,
}

impl Step {
    fn copy(sub: u32, src: u32, dst: u32) -> [Step; 3] {
        [
            Step { kind: CommandKind::Act, sub, row: src, opens: None },
            Step { kind: CommandKind::Transfer, sub, row: dst, opens: None },
            Step { kind: CommandKind::Pre, sub, row: src, opens: None },
        ]
    }
}

#[derive(Debug, Clone, Copy)]
struct OpenRow {
    key: Option<(u32, u32)>,
    sub: u32,
    phys: u32,
    tier: u8,
    act: Cycle,
    params: TimingParams,
    opener: Option<Opening>,
    owner: Option<usize>,
}

struct Bank {
    base: Address,
    channel: usize,
    state: BankState,
    queue: Vec<QueuedRequest>,
    script: VecDeque<Step>,
    script_owner: Option<usize>,
    open: Option<OpenRow>,
}

struct Req {
    core: usize,
    addr: Address,
    sub_idx: usize,
}

enum Place {
    /// Visible row to physical row, when not the identity.
    Direct(Option<Vec<u32>>),
    Inclusive(CacheState),
    Exclusive(CacheState, Vec<ExclusiveMap>),
    Profile(ProfileMapping),
}

#[derive(Default, Clone)]
struct CoreRun {
    next: usize,
    next_slot: u64,
    outstanding: usize,
    last_slot: u64,
    last_completion: Cycle,
    latency_sum: Cycle,
    stats: Stats,
}

#[derive(Clone, Copy)]
enum CandKind {
    Script,
    Column(usize),
    Pre,
    Act(usize),
}

#[derive(Clone, Copy)]
struct Cand {
    at: Cycle,
    class: u8,
    age: u64,
    kind: CandKind,
}

struct Engine<'a> {
    cfg: &'a SimConfig,
    mech: &'a Mechanism,
    chip: Option<&'a ChipModel>,
    traces: &'a [Trace],
    map: AddressMap,
    segs: SegmentConfig,
    place: Place,
    visible: u32,
    banks: Vec<Bank>,
    reqs: Vec<Req>,
    cores: Vec<CoreRun>,
    completions: BinaryHeap<Reverse<(Cycle, usize)>>,
    write_count: usize,
    bus_free: Vec<Cycle>,
    refresh_due: Option<Cycle>,
    refresh_pending: bool,
    trefi: Cycle,
    trfc: Cycle,
    unowned_energy: f64,
    log: Vec<LoggedCommand>,
    shuffle: ShuffleMap,
}

fn cyc(t: &TimingParams, clock: Ps) -> CycleTimings {
    t.cycles(clock)
}

impl<'a> Engine<'a> {
    fn new(cfg: &'a SimConfig, mech: &'a Mechanism, chip: Option<&'a ChipModel>, traces: &'a [Trace]) -> Result<Self> {
        cfg.validate()?;
        if traces.is_empty() || traces.iter().any(Trace::is_empty) {
            return Err(Error::config("every core needs a non-empty trace"));
        }
        let topo = &cfg.topology;
        if let Some(c) = chip {
            if c.topology() != topo {
                return Err(Error::config("chip model organization differs from the simulated topology"));
            }
        }
        let rows = topo.rows_per_subarray;
        let n_subs = topo.banks_total() as usize * topo.subarrays_per_bank as usize;
        let map = AddressMap::new(topo.clone(), cfg.mapping, None)?;
        let mut segs = SegmentConfig::unsegmented(rows, cfg.timings);
        let mut shuffle = ShuffleMap::identity();
        let (place, visible) = match mech {
            Mechanism::Baseline | Mechanism::AlDram { .. } => (Place::Direct(None), rows),
            Mechanism::Ava { shuffle: s, reserved_rows, .. } => {
                shuffle = *s;
                if reserved_rows.iter().any(|&r| r >= rows) {
                    return Err(Error::config("reserved row outside the subarray"));
                }
                let data: Vec<u32> = (0..rows).filter(|r| !reserved_rows.contains(r)).collect();
                if data.is_empty() {
                    return Err(Error::config("every row is reserved"));
                }
                let v = data.len() as u32;
                (Place::Direct(Some(data)), v)
            }
            Mechanism::TlDram { segments, placement } => {
                segments.validate(rows)?;
                segs = segments.clone();
                let near = segs.near_rows();
                match *placement {
                    Placement::Static => (Place::Direct(None), rows),
                    Placement::Inclusive(k) => (Place::Inclusive(CacheState::inclusive(k, n_subs, near)), rows - near),
                    Placement::Exclusive(k) => {
                        let maps = (0..n_subs).map(|_| ExclusiveMap::new(rows)).collect::<Result<Vec<_>>>()?;
                        (Place::Exclusive(CacheState::exclusive(k, n_subs, near), maps), rows - 1)
                    }
                    Placement::Profile => {
                        let mut counts = vec![vec![0u64; rows as usize]; n_subs];
                        for t in traces {
                            for r in &t.requests {
                                let a = map.decode(r.addr % topo.capacity_bytes())?;
                                counts[a.subarray_index(topo)][a.row_external as usize] += 1;
                            }
                        }
                        let sel = build_profile_mapping(&counts, near);
                        (Place::Profile(ProfileMapping::new(&sel, rows)), rows)
                    }
                }
            }
        };
        let mut banks = Vec::new();
        for channel in 0..topo.channels {
            for rank in 0..topo.ranks_per_channel {
                for bank in 0..topo.banks_per_rank {
                    banks.push(Bank {
                        base: Address { channel, rank, bank, ..Address::default() },
                        channel: channel as usize,
                        state: BankState::default(),
                        queue: Vec::new(),
                        script: VecDeque::new(),
                        script_owner: None,
                        open: None,
                    });
                }
            }
        }
        let clock = topo.clock_period_ps;
        let trefi = ((cfg.refresh_ms * 1e9 / REFRESH_COMMANDS_PER_WINDOW as f64) / clock.0 as f64).floor() as Cycle;
        let trfc = cfg.trfc.cycles(clock);
        if cfg.refresh && trefi <= trfc {
            return Err(Error::Config(format!("refresh interval {} ms leaves no time between refreshes", cfg.refresh_ms)));
        }
        let mut cores = vec![CoreRun::default(); traces.len()];
        for (c, t) in cores.iter_mut().zip(traces) {
            c.next_slot = t.requests[0].gap;
            c.stats.instructions = t.instructions();
        }
        Ok(Engine {
            cfg,
            mech,
            chip,
            traces,
            map,
            segs,
            place,
            visible,
            banks,
            reqs: Vec::new(),
            cores,
            completions: BinaryHeap::new(),
            write_count: 0,
            bus_free: vec![0; topo.channels as usize],
            refresh_due: (cfg.refresh && trefi > 0).then_some(trefi),
            refresh_pending: false,
            trefi: trefi.max(1),
            trfc,
            unowned_energy: 0.0,
            log: Vec::new(),
            shuffle,
        })
    }

    fn clock(&self) -> Ps {
        self.cfg.topology.clock_period_ps
    }

    fn now_ms(&self, now: Cycle) -> f64 {
        now as f64 * self.clock().0 as f64 / 1e9
    }

    /// Timing set a physical row is activated with at `now`.
    fn row_params(&self, row: u32, now: Cycle) -> TimingParams {
        match self.mech {
            Mechanism::Baseline => self.cfg.timings,
            Mechanism::TlDram { .. } => *self.segs.timings_of_row(row),
            Mechanism::AlDram { timeline, .. } => timeline.at(self.now_ms(now)).timings,
            Mechanism::Ava { timings, .. } => *timings,
        }
    }

    fn tier(&self, row: u32) -> u8 {
        self.segs.tier_of_row(row)
    }

    fn command(&self, b: usize, kind: CommandKind, sub: u32, row: u32, now: Cycle) -> Command {
        let addr = Address { subarray: sub, row_external: row, row_internal: row, ..self.banks[b].base };
        let mut cmd = Command::new(kind, addr, now).with_tier(self.tier(row));
        if kind == CommandKind::Transfer {
            cmd = cmd.with_duration(self.segs.transfer_write_ps.cycles(self.clock()));
        }
        cmd
    }

    fn all_done(&self) -> bool {
        self.cores.iter().zip(self.traces).all(|(c, t)| c.next == t.len() && c.outstanding == 0)
            && self.banks.iter().all(|b| b.queue.is_empty() && b.script.is_empty())
    }

    // -- cores ------------------------------------------------------------

    fn step_cores(&mut self, now: Cycle) -> Result<()> {
        let s = self.cfg.core.slots_per_mem_cycle();
        let mshr = self.cfg.core.mshr_limit as usize;
        for c in 0..self.cores.len() {
            let trace = &self.traces[c];
            while self.cores[c].next < trace.len() {
                let core = &self.cores[c];
                if core.next_slot / s > now {
                    break;
                }
                let r = trace.requests[core.next];
                let read = r.op == Op::Read;
                if (read && core.outstanding >= mshr) || (!read && self.write_count >= self.cfg.write_queue) {
                    break;
                }
                let slot = core.next_slot.max(now * s);
                self.enqueue(c, &r, now)?;
                let core = &mut self.cores[c];
                if read {
                    core.outstanding += 1;
                    core.stats.reads += 1;
                } else {
                    self.write_count += 1;
                    core.stats.writes += 1;
                }
                core.last_slot = slot;
                core.next += 1;
                if let Some(n) = trace.requests.get(core.next) {
                    core.next_slot = slot + 1 + n.gap;
                }
            }
        }
        Ok(())
    }

    /// Cycle a core can issue again without waiting for a completion.
    fn core_wake(&self, c: usize) -> Option<Cycle> {
        let core = &self.cores[c];
        let r = self.traces[c].requests.get(core.next)?;
        let blocked = if r.op == Op::Read {
            core.outstanding >= self.cfg.core.mshr_limit as usize
        } else {
            self.write_count >= self.cfg.write_queue
        };
        (!blocked).then(|| core.next_slot / self.cfg.core.slots_per_mem_cycle())
    }

    fn enqueue(&mut self, core: usize, r: &TraceRequest, now: Cycle) -> Result<()> {
        let topo = &self.cfg.topology;
        let mut addr = self.map.decode(r.addr % topo.capacity_bytes())?;
        addr.row_external %= self.visible;
        let b = addr.bank_index(topo);
        let id = self.reqs.len();
        self.reqs.push(Req { core, addr, sub_idx: addr.subarray_index(topo) });
        self.banks[b].queue.push(QueuedRequest {
            id: id as u64,
            arrival: now,
            subarray: addr.subarray,
            row: addr.row_external,
            is_write: r.op == Op::Write,
        });
        Ok(())
    }

    // -- scheduling -------------------------------------------------------

    fn candidate(&self, b: usize, now: Cycle) -> Result<Option<Cand>> {
        let bank = &self.banks[b];
        let clock = self.clock();
        if let Some(step) = bank.script.front() {
            let cmd = self.command(b, step.kind, step.sub, step.row, now);
            let t = match (step.kind, bank.open) {
                (CommandKind::Pre, Some(o)) => cyc(&o.params, clock),
                _ => cyc(&self.row_params(step.row, now), clock),
            };
            let at = bank.state.earliest_legal_time(&cmd, &t, now)?;
            return Ok(Some(Cand { at, class: 0, age: 0, kind: CandKind::Script }));
        }
        if self.refresh_pending {
            // Finish the activation in flight for its own request, then close.
            if let Some(op) = bank.open.and_then(|o| o.opener) {
                if let Some(i) = bank.queue.iter().position(|q| q.id == op.req) {
                    return self.column_candidate(b, i, now).map(Some);
                }
            }
            if bank.state.is_open() {
                return self.pre_candidate(b, now, 2, 0).map(Some);
            }
            return Ok(None);
        }
        let open_key = bank.open.and_then(|o| o.key);
        let Some((kind, qi, class, age)) = bank_choice(&bank.queue, open_key, bank.state.is_open(), self.cfg.row_policy)
        else {
            return Ok(None);
        };
        Ok(Some(match kind {
            CommandKind::Rd | CommandKind::Wr => self.column_candidate(b, qi.unwrap(), now)?,
            CommandKind::Pre => self.pre_candidate(b, now, class, age)?,
            _ => {
                let cmd = self.command(b, CommandKind::Act, 0, 0, now);
                let t = cyc(&self.cfg.timings, clock);
                let at = bank.state.earliest_legal_time(&cmd, &t, now)?;
                Cand { at, class, age, kind: CandKind::Act(qi.unwrap()) }
            }
        }))
    }

    fn column_candidate(&self, b: usize, i: usize, now: Cycle) -> Result<Cand> {
        let bank = &self.banks[b];
        let q = bank.queue[i];
        let o = bank.open.expect("row hit on an open bank");
        let kind = if q.is_write { CommandKind::Wr } else { CommandKind::Rd };
        let cmd = self.command(b, kind, o.sub, o.phys, now);
        let t = cyc(&o.params, self.clock());
        let lead = if q.is_write { t.tcwl } else { t.tcl };
        let at = bank.state.earliest_legal_time(&cmd, &t, now)?.max(self.bus_free[bank.channel].saturating_sub(lead));
        Ok(Cand { at, class: 1, age: q.id, kind: CandKind::Column(i) })
    }

    fn pre_candidate(&self, b: usize, now: Cycle, class: u8, age: u64) -> Result<Cand> {
        let bank = &self.banks[b];
        let o = bank.open.expect("precharge of an open bank");
        let cmd = self.command(b, CommandKind::Pre, o.sub, o.phys, now);
        let at = bank.state.earliest_legal_time(&cmd, &cyc(&o.params, self.clock()), now)?;
        Ok(Cand { at, class, age, kind: CandKind::Pre })
    }

    fn issue(&mut self, b: usize, cmd: Command, t: CycleTimings, owner: Option<usize>) -> Result<()> {
        self.banks[b].state = self.banks[b].state.apply_command(&cmd, &t)?;
        let e = logged_energy(&self.cfg.energy, &cmd, &self.segs, &self.cfg.topology);
        match owner {
            Some(c) => {
                self.cores[c].stats.energy_units += e;
                if cmd.kind == CommandKind::Transfer {
                    self.cores[c].stats.caching_transfers += 1;
                }
            }
            None => self.unowned_energy += e,
        }
        if self.cfg.record_commands {
            self.log.push(LoggedCommand { bank: b, cmd, timings: t });
        }
        Ok(())
    }

    fn fire(&mut self, b: usize, kind: CandKind, now: Cycle) -> Result<()> {
        match kind {
            CandKind::Script => self.fire_script(b, now),
            CandKind::Column(i) => self.fire_column(b, i, now),
            CandKind::Pre => self.fire_pre(b, now),
            CandKind::Act(i) => {
                let (steps, owner) = self.plan(b, i)?;
                let bank = &mut self.banks[b];
                bank.script.extend(steps);
                bank.script_owner = Some(owner);
                self.fire_script(b, now)
            }
        }
    }

    fn fire_script(&mut self, b: usize, now: Cycle) -> Result<()> {
        let step = self.banks[b].script.pop_front().expect("script step");
        let owner = self.banks[b].script_owner;
        let cmd = self.command(b, step.kind, step.sub, step.row, now);
        let clock = self.clock();
        match step.kind {
            CommandKind::Act => {
                let params = self.row_params(step.row, now);
                self.issue(b, cmd, cyc(&params, clock), owner)?;
                self.banks[b].open = Some(OpenRow {
                    key: step.opens.map(|o| (step.sub, o.tag)),
                    sub: step.sub,
                    phys: step.row,
                    tier: cmd.tier,
                    act: now,
                    params,
                    opener: step.opens,
                    owner,
                });
            }
            CommandKind::Transfer => {
                let t = cyc(&self.row_params(step.row, now), clock);
                self.issue(b, cmd, t, owner)?;
            }
            CommandKind::Pre => {
                let o = self.banks[b].open.take().expect("script precharge of an open bank");
                self.issue(b, cmd, cyc(&o.params, clock), owner)?;
            }
            k => unreachable!("{k:?} in a script"),
        }
        Ok(())
    }

    fn fire_column(&mut self, b: usize, i: usize, now: Cycle) -> Result<()> {
        let q = self.banks[b].queue.remove(i);
        let o = self.banks[b].open.expect("column command on an open bank");
        let req = &self.reqs[q.id as usize];
        let (core, sub_idx) = (req.core, req.sub_idx);
        let kind = if q.is_write { CommandKind::Wr } else { CommandKind::Rd };
        let cmd = self.command(b, kind, o.sub, o.phys, now);
        let t = cyc(&o.params, self.clock());
        self.issue(b, cmd, t, Some(core))?;
        let ch = self.banks[b].channel;
        let stats = &mut self.cores[core].stats;
        match o.opener {
            Some(op) if op.req == q.id => {
                if op.near {
                    stats.near_hits += 1
                } else {
                    stats.far_accesses += 1
                }
            }
            _ => {
                stats.row_buffer_hits += 1;
                if let Place::Inclusive(cache) | Place::Exclusive(cache, _) = &mut self.place {
                    cache.on_access(sub_idx, q.row, true, q.is_write, 0);
                }
            }
        }
        if q.is_write {
            self.bus_free[ch] = now + t.tcwl + t.tbl;
            self.write_count -= 1;
        } else {
            let done = now + t.tcl + t.tbl;
            self.bus_free[ch] = done;
            self.completions.push(Reverse((done, core)));
            let c = &mut self.cores[core];
            c.latency_sum += done - q.arrival;
            self.inject(q.id as usize, &o, now);
        }
        Ok(())
    }

    fn fire_pre(&mut self, b: usize, now: Cycle) -> Result<()> {
        let o = self.banks[b].open.take().expect("precharge of an open bank");
        let cmd = self.command(b, CommandKind::Pre, o.sub, o.phys, now);
        self.issue(b, cmd, cyc(&o.params, self.clock()), o.owner)?;
        self.precharge_hooks(b, &o, now)
    }

    /// Commands that activate the row for queued request `i`, copies first.
    fn plan(&mut self, b: usize, i: usize) -> Result<(Vec<Step>, usize)> {
        let q = self.banks[b].queue[i];
        let req = &self.reqs[q.id as usize];
        let (core, sub_idx, sub, tag) = (req.core, req.sub_idx, q.subarray, q.row);
        let opening = |near| Some(Opening { tag, req: q.id, near });
        let clock = self.clock();
        let near_rows = self.segs.near_rows();
        let mut steps = Vec::new();
        match &mut self.place {
            Place::Direct(rows) => {
                let phys = rows.as_ref().map_or(tag, |r| r[tag as usize]);
                let near = self.segs.is_segmented() && self.segs.tier_of_row(phys) == 0;
                steps.push(Step { kind: CommandKind::Act, sub, row: phys, opens: opening(near) });
            }
            Place::Profile(m) => {
                let phys = m.phys(sub_idx, tag);
                let near = self.segs.tier_of_row(phys) == 0;
                steps.push(Step { kind: CommandKind::Act, sub, row: phys, opens: opening(near) });
            }
            Place::Inclusive(cache) => {
                let saving = cyc(self.segs.far(), clock).trcd.saturating_sub(cyc(self.segs.near(), clock).trcd);
                let out = cache.on_access(sub_idx, tag, false, q.is_write, saving);
                match out.class {
                    AccessClass::NearHit => {
                        let slot = out.slot.expect("near hit has a slot");
                        steps.push(Step { kind: CommandKind::Act, sub, row: slot, opens: opening(true) });
                    }
                    _ => {
                        let mut fill = None;
                        for a in &out.actions {
                            match *a {
                                Action::Writeback { slot, tag: old } => steps.extend(Step::copy(sub, slot, near_rows + old)),
                                Action::Cache { slot, .. } => fill = Some(slot),
                                Action::Swap { .. } => unreachable!("swap under inclusive caching"),
                            }
                        }
                        steps.push(Step { kind: CommandKind::Act, sub, row: near_rows + tag, opens: opening(false) });
                        if let Some(slot) = fill {
                            steps.push(Step { kind: CommandKind::Transfer, sub, row: slot, opens: None });
                        }
                    }
                }
            }
            Place::Exclusive(cache, maps) => {
                let saving = cyc(self.segs.far(), clock).trcd.saturating_sub(cyc(self.segs.near(), clock).trcd);
                let out = cache.on_access(sub_idx, tag, false, q.is_write, saving);
                let mut swapped = false;
                for a in &out.actions {
                    if let Action::Swap { tag: c, victim, .. } = *a {
                        for (src, dst) in exclusive_swap(&mut maps[sub_idx], c, victim)? {
                            steps.extend(Step::copy(sub, src, dst));
                        }
                        swapped = true;
                    }
                }
                let phys = maps[sub_idx].phys(tag);
                let near = out.class == AccessClass::NearHit && !swapped;
                steps.push(Step { kind: CommandKind::Act, sub, row: phys, opens: opening(near) });
            }
        }
        Ok((steps, core))
    }

    /// Policy work triggered by closing a request-opened row.
    fn precharge_hooks(&mut self, b: usize, o: &OpenRow, now: Cycle) -> Result<()> {
        let Some((sub, tag)) = o.key else { return Ok(()) };
        let kind = match &self.place {
            Place::Inclusive(c) | Place::Exclusive(c, _) => c.kind(),
            _ => return Ok(()),
        };
        if kind == PolicyKind::Sc {
            return Ok(());
        }
        let clock = self.clock();
        let trc_far = cyc(self.segs.far(), clock).trc();
        let trc_near = cyc(self.segs.near(), clock).trc();
        let arrivals: Vec<(Cycle, u32, u32)> = self.banks[b].queue.iter().map(|q| (q.arrival, q.subarray, q.row)).collect();
        let opener = o.opener.map(|op| self.reqs[op.req as usize].sub_idx);
        let Some(sub_idx) = opener else { return Ok(()) };
        let near_rows = self.segs.near_rows();
        let mut steps = Vec::new();
        match &mut self.place {
            Place::Inclusive(cache) => match kind {
                PolicyKind::Wmc => {
                    let wait = is_wait_inducing(o.act, trc_far, now, (sub, tag), &arrivals);
                    for a in cache.wmc_on_precharge(sub_idx, tag, wait) {
                        match a {
                            Action::Writeback { slot, tag: old } => steps.extend(Step::copy(sub, slot, near_rows + old)),
                            Action::Cache { slot, tag } => steps.extend(Step::copy(sub, near_rows + tag, slot)),
                            Action::Swap { .. } => unreachable!("swap under inclusive caching"),
                        }
                    }
                }
                _ => {
                    if o.tier == 0 {
                        let saved = wait_saving(o.act, trc_far, trc_near, now, (sub, tag), &arrivals);
                        cache.bbc_on_precharge(sub_idx, tag, saved);
                    }
                }
            },
            Place::Exclusive(cache, maps) => match kind {
                PolicyKind::Wmc => {
                    let wait = is_wait_inducing(o.act, trc_far, now, (sub, tag), &arrivals);
                    for a in cache.wmc_on_precharge(sub_idx, tag, wait) {
                        if let Action::Swap { tag: c, victim, .. } = a {
                            for (src, dst) in exclusive_swap(&mut maps[sub_idx], c, victim)? {
                                steps.extend(Step::copy(sub, src, dst));
                            }
                        }
                    }
                }
                _ => {
                    if o.tier == 0 {
                        let saved = wait_saving(o.act, trc_far, trc_near, now, (sub, tag), &arrivals);
                        cache.bbc_on_precharge(sub_idx, tag, saved);
                    }
                }
            },
            _ => {}
        }
        if !steps.is_empty() {
            let bank = &mut self.banks[b];
            bank.script.extend(steps);
            bank.script_owner = o.owner;
        }
        Ok(())
    }

    // -- refresh ----------------------------------------------------------

    /// Issue the all-bank refresh once every bank is closed and idle.
    /// Returns the cycle it becomes possible when that is later than `now`.
    fn try_refresh(&mut self, now: Cycle) -> Result<Option<Cycle>> {
        if self.banks.iter().any(|b| b.state.is_open() || !b.script.is_empty()) {
            return Ok(None);
        }
        let mut at = now;
        let t = cyc(&self.cfg.timings, self.clock());
        for b in 0..self.banks.len() {
            let cmd = self.command(b, CommandKind::Ref, 0, 0, now);
            at = at.max(self.banks[b].state.earliest_legal_time(&cmd, &t, now)?);
        }
        if at > now {
            return Ok(Some(at));
        }
        for b in 0..self.banks.len() {
            let cmd = self.command(b, CommandKind::Ref, 0, 0, now).with_tier(0).with_duration(self.trfc);
            self.issue(b, cmd, t, None)?;
        }
        self.refresh_pending = false;
        self.refresh_due = self.refresh_due.map(|d| d + self.trefi);
        Ok(None)
    }

    // -- reliability ------------------------------------------------------

    fn inject(&mut self, id: usize, o: &OpenRow, now: Cycle) {
        let Some(chip) = self.chip else { return };
        let topo = chip.topology();
        let req = &self.reqs[id];
        let temp = match self.mech {
            Mechanism::AlDram { temperature, .. } => temperature.temp_at(self.now_ms(now) / 1000.0),
            _ => self.cfg.temp_c,
        };
        let row = chip.row_map().to_internal(o.phys);
        let stress = Stress::new(Op::Read);
        let mut line: Line = [0; BURSTS];
        let stats = &mut self.cores[req.core].stats;
        for c in 0..topo.chips_per_rank.min(CHIPS as u32) {
            for bit in 0..64u32 {
                let cell = CellCoords::from_access(topo, c, req.addr.bank, o.sub, row, req.addr.column, bit);
                if let Outcome::Fail(kind) = chip.cell_outcome(&cell, &o.params, temp, self.cfg.refresh_ms, &stress) {
                    match kind {
                        FailKind::Timing => stats.timing_errors += 1,
                        FailKind::Retention => stats.retention_errors += 1,
                    }
                    line[(bit / 8) as usize] |= 1 << (8 * c + bit % 8);
                }
            }
        }
        if line.iter().any(|w| *w != 0) {
            let t = tally_line(&apply_shuffle(&self.shuffle, &line));
            stats.errors_injected += t.total_errors;
            stats.errors_corrected += t.corrected;
            stats.errors_uncorrectable += t.uncorrectable;
        }
    }

    // -- main loop --------------------------------------------------------

    fn run(mut self) -> Result<SimResult> {
        let mut now: Cycle = 0;
        loop {
            while let Some(&Reverse((t, c))) = self.completions.peek() {
                if t > now {
                    break;
                }
                self.completions.pop();
                let core = &mut self.cores[c];
                core.outstanding -= 1;
                core.last_completion = core.last_completion.max(t);
            }
            self.step_cores(now)?;
            if self.all_done() && self.completions.is_empty() {
                break;
            }
            if self.refresh_due.is_some_and(|d| now >= d) {
                self.refresh_pending = true;
            }
            let mut refresh_at = None;
            if self.refresh_pending {
                refresh_at = self.try_refresh(now)?;
            }
            // One command per channel per cycle.
            let mut next = Cycle::MAX;
            let mut best: Vec<Option<(usize, Cand)>> = vec![None; self.bus_free.len()];
            for b in 0..self.banks.len() {
                let Some(c) = self.candidate(b, now)? else { continue };
                if c.at > now {
                    next = next.min(c.at);
                    continue;
                }
                let ch = self.banks[b].channel;
                let better = best[ch].is_none_or(|(bb, x)| (c.class, c.age, b) < (x.class, x.age, bb));
                if better {
                    if let Some((_, _)) = best[ch] {
                        next = next.min(now + 1);
                    }
                    best[ch] = Some((b, c));
                } else {
                    next = next.min(now + 1);
                }
            }
            let mut fired = false;
            for (b, c) in best.into_iter().flatten() {
                self.fire(b, c.kind, now)?;
                fired = true;
            }
            if fired {
                next = next.min(now + 1);
            }
            if let Some(&Reverse((t, _))) = self.completions.peek() {
                next = next.min(t);
            }
            for c in 0..self.cores.len() {
                if let Some(w) = self.core_wake(c) {
                    next = next.min(w);
                }
            }
            if let Some(d) = self.refresh_due {
                next = next.min(if self.refresh_pending { refresh_at.unwrap_or(now + 1) } else { d });
            }
            if next == Cycle::MAX {
                return Err(Error::config("simulation stalled with requests outstanding"));
            }
            now = next.max(now + 1);
        }
        Ok(self.finish(now))
    }

    fn finish(self, now: Cycle) -> SimResult {
        let s = self.cfg.core.slots_per_mem_cycle();
        let ipc = self.cfg.core.nonmem_ipc as u64;
        let clock_ns = self.clock().0 as f64 / 1000.0;
        let per_core: Vec<Stats> = self
            .cores
            .iter()
            .map(|c| {
                let mut st = c.stats;
                let end_slot = (c.last_slot + 1).max(c.last_completion * s);
                st.cycles = end_slot.div_ceil(ipc).max(1);
                st.ipc_proxy = st.instructions as f64 / st.cycles as f64;
                st.avg_read_latency_ns = if st.reads > 0 { c.latency_sum as f64 * clock_ns / st.reads as f64 } else { 0.0 };
                st
            })
            .collect();
        let mut agg = Stats::default();
        let mut lat_sum = 0.0;
        for st in &per_core {
            agg.instructions += st.instructions;
            agg.cycles = agg.cycles.max(st.cycles);
            agg.reads += st.reads;
            agg.writes += st.writes;
            agg.row_buffer_hits += st.row_buffer_hits;
            agg.near_hits += st.near_hits;
            agg.far_accesses += st.far_accesses;
            agg.energy_units += st.energy_units;
            agg.caching_transfers += st.caching_transfers;
            agg.errors_injected += st.errors_injected;
            agg.timing_errors += st.timing_errors;
            agg.retention_errors += st.retention_errors;
            agg.errors_corrected += st.errors_corrected;
            agg.errors_uncorrectable += st.errors_uncorrectable;
            lat_sum += st.avg_read_latency_ns * st.reads as f64;
        }
        agg.energy_units += self.unowned_energy;
        agg.ipc_proxy = agg.instructions as f64 / agg.cycles as f64;
        agg.avg_read_latency_ns = if agg.reads > 0 { lat_sum / agg.reads as f64 } else { 0.0 };
        SimResult { per_core, aggregate: agg, mem_cycles: now, commands: self.log }
    }
}

/// Run one trace per core through the controller. With a chip model, every
/// read is checked cell by cell under the timings it was activated with and
/// decoded through SECDED; errors are counted, never fatal.
///
/// Byte addresses wrap at the module capacity, and row indices wrap at the
/// number of rows the placement exposes.
pub fn run_simulation(cfg: &SimConfig, mech: &Mechanism, chip: Option<&ChipModel>, traces: &[Trace]) -> Result<SimResult> {
    Engine::new(cfg, mech, chip, traces)?.run()
}
