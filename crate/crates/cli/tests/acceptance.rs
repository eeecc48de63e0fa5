//! Acceptance suite: one PASS/FAIL line per criterion, with the measured
//! values and runtime against the criterion's budget. Exits non-zero if any
//! criterion fails.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use dramlat::aldram::*;
use dramlat::ava::*;
use dramlat::dram::{Address, AddressMap, Param, Ps, RowMap, TimingParams, Topology};
use dramlat::harness::*;
use dramlat::policies::{tag_storage_bits, PolicyKind, TagScheme};
use dramlat::presets::{clustered_setup, ChipPreset};
use dramlat::sim::*;
use dramlat::tldram::*;
use dramlat::variation::*;
use dramlat::Exec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

// ------------------------------------------------------------ criterion 1

fn ceil_cycles(ns: f64, clock_ps: u64) -> f64 {
    ((ns * 1000.0) / clock_ps as f64).ceil()
}

fn timing_arithmetic() -> Outcome {
    let cfg = SimConfig::default();
    let clk = cfg.topology.clock_period_ps.0;
    let cyc = clk as f64 / 1000.0;
    // DDR3-1066 datasheet: tRCD = tRP = tCL = 15 ns, tRAS = 37.5 ns, BL8 = 7.5 ns.
    let c = |ns| ceil_cycles(ns, clk);
    let unloaded_oracle = (c(15.0) + c(15.0) + c(7.5)) * cyc;
    let loaded_oracle = (c(37.5) + c(15.0) + c(15.0) + c(15.0) + c(7.5)) * cyc;

    let map = AddressMap::new(cfg.topology.clone(), cfg.mapping, None).map_err(err)?;
    let addr = |row| map.encode(&Address { bank: 0, subarray: 0, row_external: row, row_internal: row, column: 0, ..Address::default() });
    let rd = |row| TraceRequest { gap: 0, op: dramlat::variation::Op::Read, addr: addr(row) };
    let avg = |reqs: Vec<TraceRequest>| -> Result<f64, String> {
        Ok(run_simulation(&cfg, &Mechanism::Baseline, None, &[Trace { requests: reqs }]).map_err(err)?.aggregate.avg_read_latency_ns)
    };
    let unloaded = avg(vec![rd(5)])?;
    // Both requests arrive together; the second waits for the row conflict.
    let loaded = 2.0 * avg(vec![rd(5), rd(9)])? - unloaded;
    ensure((unloaded - 37.5).abs() <= cyc && unloaded == unloaded_oracle, || format!("unloaded {unloaded} ns"))?;
    ensure((loaded - 90.0).abs() <= cyc && loaded == loaded_oracle, || format!("loaded {loaded} ns"))?;

    // The same figure end to end through the binary.
    let d = tempfile::TempDir::new().map_err(err)?;
    fs::write(d.path().join("c.toml"), "schema_version = 1\n[timings]\npreset = \"ddr3_1066\"\n").map_err(err)?;
    fs::write(d.path().join("one.trace"), "0 R 0x0\n").map_err(err)?;
    let o = dramlat(d.path(), &["run", "--config", "c.toml", "--trace", "one.trace", "--out-dir", "out"])?;
    let csv = fs::read_to_string(d.path().join("out/stats.csv")).map_err(err)?;
    let cli: f64 = csv.lines().nth(1).and_then(|l| l.split(',').nth(3)).and_then(|v| v.parse().ok()).ok_or("no latency in stats.csv")?;
    ensure(o && cli == unloaded, || format!("cli reported {cli} ns"))?;
    Ok(format!("unloaded {unloaded} ns, loaded {loaded} ns, cli {cli} ns (tolerance {cyc} ns)"))
}

// ------------------------------------------------------------ criterion 2

fn tldram_constants() -> Outcome {
    let base = TimingParams::ddr3_1066();
    let pair = |near| -> Result<[f64; 4], String> {
        let c = derive_segment_timings(near, 512, &base, DeriveMode::Table).map_err(err)?;
        Ok([c.near().trcd().as_ns(), c.near().trc().as_ns(), c.far().trcd().as_ns(), c.far().trc().as_ns()])
    };
    let a = pair(128)?;
    let b = pair(32)?;
    ensure(a == [9.3, 27.8, 13.2, 64.1], || format!("128/384: {a:?}"))?;
    ensure(b == [8.2, 23.1, 12.1, 65.8], || format!("32/480: {b:?}"))?;
    let t = derive_tiers(&[32, 224, 256], &base, DeriveMode::Table).map_err(err)?;
    let pct = |x: Ps, y: Ps| (1000.0 * x.0 as f64 / y.0 as f64).round() / 10.0;
    let trcd: Vec<f64> = t.tiers.iter().map(|k| pct(k.timings.trcd(), base.trcd())).collect();
    let trc: Vec<f64> = t.tiers.iter().map(|k| pct(k.timings.trc(), base.trc())).collect();
    ensure(trcd == [54.8, 70.7, 104.1] && trc == [44.0, 77.8, 156.9], || format!("tiers {trcd:?} {trc:?}"))?;
    Ok(format!("128/384 {a:?}, 32/480 {b:?}, tiers tRCD {trcd:?} tRC {trc:?}"))
}

// ------------------------------------------------------------ criterion 3

/// Truncation to three significant figures.
fn sig3(x: f64) -> f64 {
    let e = x.abs().log10().floor() as i32;
    let f = 10f64.powi(2 - e);
    (x * f * (1.0 + 1e-9)).trunc() / f
}

fn area_and_storage() -> Outcome {
    let topo = Topology::default();
    let mut cfg = derive_segment_timings(32, 512, &TimingParams::ddr3_1066(), DeriveMode::Table).map_err(err)?;
    cfg.isolation_sets = 1;
    let one = area_overhead(&cfg, &topo);
    cfg.isolation_sets = 2;
    let two = area_overhead(&cfg, &topo);
    let got = [
        one.isolation_overhead_frac * 100.0,
        two.isolation_overhead_frac * 100.0,
        two.die_overhead_frac * 100.0,
        two.capacity_loss_frac * 100.0,
        two.total_overhead_frac * 100.0,
    ];
    let want = [1.83, 3.66, 3.15, 3.125, 6.275];
    for (g, w) in got.iter().zip(want) {
        ensure(sig3(*g) == sig3(w), || format!("area {g} vs {w}"))?;
    }
    let kb = |bits: u64| bits as f64 / 8.0 / 1024.0;
    let sc = tag_storage_bits(32, 480, 256, TagScheme::Sc);
    let bbc = tag_storage_bits(32, 480, 256, TagScheme::Bbc);
    let ex = tag_storage_bits(32, 480, 256, TagScheme::Exclusive);
    let kbs = [kb(sc.tag_bits), kb(ex.tag_bits), kb(sc.replacement_bits), kb(bbc.replacement_bits)];
    for (g, w) in kbs.iter().zip([9.0, 144.0, 5.0, 8.0]) {
        ensure(sig3(*g) == sig3(w), || format!("storage {g} KB vs {w} KB"))?;
    }
    let pcts: Vec<String> = got.iter().map(|g| format!("{:.4}", g)).collect();
    Ok(format!("area % {pcts:?}, tags/replacement KB {kbs:?}"))
}

// ------------------------------------------------------------ criterion 4

fn secded() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut singles, mut doubles) = (0u64, 0u64);
    for _ in 0..1000 {
        let x: u64 = rng.random();
        let cw = secded_encode(x);
        ensure(secded_decode(cw) == Decoded::Clean(x), || format!("round trip of {x:#x}"))?;
        for i in 0..72 {
            match secded_decode(cw.flip(i)) {
                Decoded::Corrected { data, bit } if data == x && bit == i => singles += 1,
                other => return Err(format!("flip {i} of {x:#x}: {other:?}")),
            }
            for j in i + 1..72 {
                ensure(secded_decode(cw.flip(i).flip(j)) == Decoded::Uncorrectable, || format!("flips {i},{j} of {x:#x}"))?;
                doubles += 1;
            }
        }
    }
    ensure(singles == 72_000 && doubles == 2_556_000, || format!("{singles} singles, {doubles} doubles"))?;
    Ok(format!("1000 words: {singles} single flips corrected, {doubles} double flips flagged"))
}

// ------------------------------------------------------------ criterion 5

fn shuffling() -> Outcome {
    let mut cluster = [0u64; BURSTS];
    for c in 0..CHIPS {
        cluster[3] |= 1 << (8 * c + 5);
    }
    let ident = tally_line(&cluster);
    let rot = tally_line(&apply_shuffle(&ShuffleMap::rotation(), &cluster));
    ensure(ident.uncorrectable == ident.total_errors && ident.total_errors == 8, || format!("identity {ident:?}"))?;
    ensure(rot.corrected == rot.total_errors && rot.total_errors == 8, || format!("rotation {rot:?}"))?;
    let mut fracs = Vec::new();
    for seed in 1..=20 {
        let chip = ChipPreset::Clustered.chip_with_seed(seed);
        let c = compare_shuffle(&chip, &clustered_setup(1000, seed), &ShuffleMap::rotation(), Exec::Parallel);
        ensure(c.shuffled.corrected >= c.identity.corrected, || format!("seed {seed}: {c:?}"))?;
        fracs.push(c.newly_corrected_fraction());
    }
    let mean = fracs.iter().sum::<f64>() / fracs.len() as f64;
    ensure((mean - 0.26).abs() <= 0.15, || format!("newly corrected {mean:.3}"))?;
    Ok(format!("cluster: identity 8/8 uncorrectable, rotation 8/8 corrected; 20 seeds newly corrected {:.1}%", mean * 100.0))
}

// ------------------------------------------------------------ criterion 6

fn brute_force(chip: &ChipModel, grid: &TimingGrid, temp: f64, refresh: SafeRefresh) -> Option<TimingParams> {
    let scope = CellScope::full(chip.topology());
    let mut combos: Vec<TimingParams> = grid.combos(chip.standard()).collect();
    combos.sort_by_key(selection_key);
    combos.into_iter().find(|t| {
        [Op::Read, Op::Write]
            .into_iter()
            .all(|op| scope.iter().all(|c| !chip.cell_failure_oracle(&c, t, temp, refresh.get(op), op).failed()))
    })
}

fn profiling_oracle() -> Outcome {
    let chip = ChipPreset::SigmaZeroToy.chip();
    let topo = chip.topology();
    ensure(topo.banks_per_rank == 1 && topo.mats_per_subarray_row == 4 && topo.cells_per_mat_side == 512, || format!("{topo:?}"))?;
    let std = *chip.standard();
    let grid = TimingGrid::stepped([(5.0, 12.5), (15.0, 30.0), (5.0, 12.5), (5.0, 12.5)], 2.5, &std).map_err(err)?;
    let refresh = SafeRefresh { safe_refresh_read_ms: 64.0, safe_refresh_write_ms: 64.0 };
    let temps = vec![45.0, 85.0];
    let digest = ProfileDigest::build(&chip, &CellScope::full(topo), &StressSet::default(), Exec::Parallel);
    let table = identify_timing_table(&chip, &digest, &Identify { temps_c: temps, grid: grid.clone(), refresh }, Exec::Parallel)
        .map_err(err)?;
    let mut notes = Vec::new();
    for e in table.entries() {
        let want = brute_force(&chip, &grid, e.temp_c, refresh).unwrap_or(std);
        ensure(e.timings == want, || format!("identify at {} degC: {:?} vs {want:?}", e.temp_c, e.timings))?;
        notes.push(format!("{} degC read sum {}", e.temp_c, e.timings.read_sum().as_ns()));
    }
    let region = select_test_region(&chip);
    let rd = ProfileDigest::build(&chip, &region.scope(topo), &StressSet::default(), Exec::Parallel);
    for temp in [45.0, 85.0] {
        let p = ava_profile(&chip, &rd, temp, 64.0, &grid);
        let want = brute_force(&chip, &grid, temp, refresh);
        ensure(p.pre_margin == want, || format!("ava at {temp} degC: {:?} vs {want:?}", p.pre_margin))?;
    }
    Ok(format!("identify and ava pre-margin equal exhaustive search ({})", notes.join(", ")))
}

// ------------------------------------------------------------ criterion 7

fn errors_at(chip: &ChipModel, op: Op, refresh: f64) -> Result<usize, String> {
    let mut spec = TestSpec::new(op, *chip.standard());
    spec.temp_c = 85.0;
    spec.refresh_ms = refresh;
    spec.iterations = 1;
    let scope = CellScope::full(chip.topology());
    let log = match op {
        Op::Read => run_read_test(chip, &spec, &scope, Exec::Parallel),
        Op::Write => run_write_test(chip, &spec, &scope, Exec::Parallel),
    };
    Ok(log.map_err(err)?.len())
}

fn safe_refresh() -> Outcome {
    let chip = ChipPreset::Reference.chip();
    let d = ProfileDigest::build(&chip, &CellScope::full(chip.topology()), &StressSet::default(), Exec::Parallel);
    let search = RefreshSearch::default();
    let s = safe_refresh_intervals(&chip, &d, &search).map_err(err)?;
    ensure((s.safe_refresh_read_ms, s.safe_refresh_write_ms) == (200.0, 152.0), || format!("{s:?}"))?;
    // The longest error-free interval is one step above, the next step fails.
    for (op, r) in [(Op::Read, s.safe_refresh_read_ms), (Op::Write, s.safe_refresh_write_ms)] {
        let (at_max, beyond) = (errors_at(&chip, op, r + 8.0)?, errors_at(&chip, op, r + 16.0)?);
        ensure(at_max == 0 && beyond > 0, || format!("{} at {} ms: {at_max}, at {} ms: {beyond}", op.name(), r + 8.0, r + 16.0))?;
    }
    Ok(format!("read {} ms, write {} ms from 208/160 ms error-free, 8 ms margin", s.safe_refresh_read_ms, s.safe_refresh_write_ms))
}

// ------------------------------------------------------------ criterion 8

fn row_map_counts(chip: &ChipModel) -> Result<Vec<u64>, String> {
    let std = *chip.standard();
    let timings = (0..12u64).map(|k| std.with(Param::Trcd, Ps(6_500 + 150 * k))).collect();
    let axes = SweepAxes { timings, temps_c: vec![55.0], refresh_ms: vec![64.0] };
    let scope = CellScope::full(chip.topology()).with_chips(vec![0]);
    let res = sweep(chip, &axes, &SweepTemplate::new(Op::Read), &scope, Exec::Parallel).map_err(err)?;
    let mut counts = vec![0u64; res.points[0].per_row.len()];
    for k in 0..res.points.len() {
        for (c, v) in counts.iter_mut().zip(res.external_row_counts(chip, k, Some(Parity::Even)).map_err(err)?) {
            *c += v;
        }
    }
    Ok(counts)
}

fn variation_structure() -> Outcome {
    // (a) periodicity with the mat height
    let chip = ChipPreset::Default.chip();
    let topo = chip.topology();
    let scope = CellScope::full(topo).with_chips(vec![0]).with_banks(vec![0]).with_subarrays(vec![0, 1, 2, 3]);
    let std = *chip.standard();
    let axes = SweepAxes { timings: vec![std.with(Param::Trp, Ps(8_750))], temps_c: vec![55.0], refresh_ms: vec![64.0] };
    let res = sweep(&chip, &axes, &SweepTemplate::new(Op::Read), &scope, Exec::Parallel).map_err(err)?;
    let rpm = topo.rows_per_mat() as usize;
    let even = res.external_row_counts(&chip, 0, Some(Parity::Even)).map_err(err)?;
    let peak = autocorrelation_peak(&even, rpm / 2, 3 * rpm / 2);
    ensure(rpm == 512 && peak == rpm, || format!("autocorrelation peak at lag {peak}"))?;

    // (b) retention halves per +10 degC
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..1000 {
        let c = CellCoords {
            chip: rng.random_range(0..topo.chips_per_rank),
            bank: rng.random_range(0..topo.banks_total() as u32),
            subarray: rng.random_range(0..topo.subarrays_per_bank),
            row: rng.random_range(0..topo.rows_per_subarray),
            mat_index: rng.random_range(0..topo.mats_per_subarray_row),
            col_in_mat: rng.random_range(0..topo.cells_per_mat_side),
        };
        let t: f64 = rng.random_range(0.0..90.0);
        let r = chip.retention_time(&c, t) / chip.retention_time(&c, t + 10.0);
        ensure((r - 2.0).abs() < 1e-9, || format!("retention ratio {r} at {t} degC"))?;
    }

    // (c) monotone error counts over a timing x temperature x refresh cube
    let toy_std = TimingParams::ddr3_1600();
    let toy = ChipModel::new(
        Topology::toy(2, 4, 64).with_clock(Ps(1_250)),
        VariationParams::default(),
        toy_std.with_core(Ps(9_000), Ps(22_000), Ps(9_000), Ps(9_000)),
        toy_std,
    )
    .map_err(err)?;
    let toy_scope = CellScope::full(toy.topology());
    let temps = vec![25.0, 55.0, 85.0];
    let refresh = vec![64.0, 256.0, 1024.0];
    for op in [Op::Read, Op::Write] {
        for p in Param::ALL {
            let timings: Vec<TimingParams> =
                (0..5u64).map(|k| toy_std.with(p, Ps(toy_std.get(p).0.saturating_sub(1_250 * k).max(1_250)))).collect();
            let axes = SweepAxes { timings, temps_c: temps.clone(), refresh_ms: refresh.clone() };
            let res = sweep(&toy, &axes, &SweepTemplate::new(op), &toy_scope, Exec::Parallel).map_err(err)?;
            let e = |ti: usize, te: usize, r: usize| res.points[(ti * temps.len() + te) * refresh.len() + r].errors;
            for ti in 0..5 {
                for te in 0..3 {
                    for r in 0..3 {
                        let here = e(ti, te, r);
                        let ok = (ti == 0 || e(ti - 1, te, r) <= here)
                            && (te == 0 || e(ti, te - 1, r) <= here)
                            && (r == 0 || e(ti, te, r - 1) <= here);
                        ensure(ok, || format!("{} {} point ({ti},{te},{r}) not monotone", op.name(), p.name()))?;
                    }
                }
            }
        }
    }

    // (d) row-mapping estimation over 20 seeds at sigma 0.02
    let perm = [3u8, 0, 4, 1, 2];
    let mut planted = vec![0u32; 5];
    for (i, &e) in perm.iter().enumerate() {
        planted[e as usize] = i as u32;
    }
    let mut conf = [0f64; 5];
    let mut min_conf = f64::INFINITY;
    for seed in 1..=20 {
        let p = ChipPreset::RowMapToy;
        let params = VariationParams { sigma_process: 0.02, ..p.params(seed) };
        let chip = ChipModel::new(p.topology(), params, p.nominal(), p.standard())
            .and_then(|c| c.with_row_map(RowMap { perm: perm.to_vec(), xor_mask: 0 }))
            .map_err(err)?;
        let est = estimate_row_mapping(&row_map_counts(&chip)?, 32).map_err(err)?;
        ensure(est.permutation() == Some(planted.clone()), || format!("seed {seed}: {:?}", est.permutation()))?;
        for b in &est.bits {
            min_conf = min_conf.min(b.confidence);
            if let Some(i) = b.internal_bit {
                conf[i as usize] += b.confidence / 20.0;
            }
        }
    }
    ensure(min_conf >= 0.9, || format!("minimum per-bit confidence {min_conf}"))?;
    // LSB first, so MSB to LSB is non-increasing when this is non-decreasing.
    ensure(conf.windows(2).all(|w| w[0] <= w[1]), || format!("mean confidence by bit {conf:?}"))?;
    Ok(format!(
        "peak lag {peak}; retention ratio 2; monotone cube; permutation recovered 20/20, min confidence {min_conf:.3}, mean LSB..MSB {:?}",
        conf.map(|c| (c * 1000.0).round() / 1000.0)
    ))
}

// ------------------------------------------------------------ criterion 9

fn policy_trends() -> Outcome {
    let cfg = SimConfig::default();
    let segments = derive_segment_timings(32, cfg.topology.rows_per_subarray, &cfg.timings, DeriveMode::Table).map_err(err)?;
    let tl = |k| Mechanism::TlDram { segments: segments.clone(), placement: Placement::Inclusive(k) };
    let run = |m: &Mechanism, t: &Trace, chip: Option<&ChipModel>, c: &SimConfig| -> Result<Stats, String> {
        Ok(run_simulation(c, m, chip, std::slice::from_ref(t)).map_err(err)?.aggregate)
    };
    let mut hl = Vec::new();
    for seed in 1..=3 {
        let t = Workload::HighLocality.generate(&cfg.topology, cfg.mapping, 20_000, seed).map_err(err)?;
        let base = run(&Mechanism::Baseline, &t, None, &cfg)?;
        let sc = run(&tl(PolicyKind::Sc), &t, None, &cfg)?;
        let bbc = run(&tl(PolicyKind::Bbc), &t, None, &cfg)?;
        let (b, s, x) = (base.avg_read_latency_ns, sc.avg_read_latency_ns, bbc.avg_read_latency_ns);
        let hits = bbc.near_frac() + bbc.row_buffer_frac();
        ensure(x <= s && s <= b, || format!("high locality seed {seed}: bbc {x} sc {s} base {b}"))?;
        ensure(hits > 0.9, || format!("high locality seed {seed}: near+rowbuf {hits}"))?;
        hl.push(format!("{b:.1}/{s:.1}/{x:.1} ns, hits {hits:.3}"));
    }
    let mut rnd = Vec::new();
    for seed in 1..=3 {
        let t = Workload::Random.generate(&cfg.topology, cfg.mapping, 20_000, seed).map_err(err)?;
        let base = run(&Mechanism::Baseline, &t, None, &cfg)?.avg_read_latency_ns;
        for k in [PolicyKind::Sc, PolicyKind::Bbc] {
            let inc = run(&tl(k), &t, None, &cfg)?.avg_read_latency_ns;
            ensure(inc >= base, || format!("random seed {seed} {k:?}: {inc} < {base}"))?;
            if k == PolicyKind::Bbc {
                rnd.push(format!("{base:.1}->{inc:.1} ns"));
            }
        }
    }
    // Adaptive timings enforced from the reference module's own table.
    let chip = ChipPreset::Reference.chip();
    let d = ProfileDigest::build(&chip, &CellScope::full(chip.topology()), &StressSet::default(), Exec::Parallel);
    let refresh = safe_refresh_intervals(&chip, &d, &RefreshSearch::default()).map_err(err)?;
    let std = *chip.standard();
    let id = Identify { temps_c: DEFAULT_TEMPS_C.to_vec(), grid: TimingGrid::aldram(&std), refresh };
    let table = identify_timing_table(&chip, &d, &id, Exec::Parallel).map_err(err)?;
    let ccfg = SimConfig::for_chip(&chip);
    let temps = TemperatureTrace::new(vec![(0.0, 45.0), (0.05, 50.0), (0.1, 55.0), (0.2, 60.0)]).map_err(err)?;
    let timeline = enforce_timings(&table, &temps, 1).map_err(err)?;
    let al = Mechanism::AlDram { timeline, temperature: temps };
    let mut ald = Vec::new();
    for w in Workload::ALL {
        let t = w.generate(&ccfg.topology, ccfg.mapping, 8_000, 3).map_err(err)?;
        let s = run(&Mechanism::Baseline, &t, Some(&chip), &ccfg)?;
        let a = run(&al, &t, Some(&chip), &ccfg)?;
        ensure(a.timing_errors == 0 && a.errors_injected == 0, || format!("{}: {a:?}", w.name()))?;
        ensure(a.avg_read_latency_ns < s.avg_read_latency_ns, || format!("{}: {} vs {}", w.name(), a.avg_read_latency_ns, s.avg_read_latency_ns))?;
        ald.push(format!("{} {:.1}->{:.1} ns", w.name(), s.avg_read_latency_ns, a.avg_read_latency_ns));
    }
    Ok(format!(
        "high locality base/sc/bbc [{}]; random base->inclusive [{}]; aldram 0 errors, {}",
        hl.join("; "),
        rnd.join(", "),
        ald.join(", ")
    ))
}

// ----------------------------------------------------------- criterion 10

fn dramlat(dir: &Path, args: &[&str]) -> Result<bool, String> {
    let o = Command::new(env!("CARGO_BIN_EXE_dramlat")).current_dir(dir).args(args).output().map_err(err)?;
    if !o.status.success() {
        return Err(format!("{args:?}: {}", String::from_utf8_lossy(&o.stderr)));
    }
    Ok(true)
}

fn read_dir_sorted(p: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut v = Vec::new();
    for e in fs::read_dir(p).map_err(err)? {
        let e = e.map_err(err)?;
        v.push((e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).map_err(err)?));
    }
    v.sort();
    Ok(v)
}

fn determinism() -> Outcome {
    let d = tempfile::TempDir::new().map_err(err)?;
    let dir = d.path();
    let topo = ChipPreset::Reference.topology();
    let w = |name: &str, text: &str| fs::write(dir.join(name), text).map_err(err);
    w("hl.trace", &Workload::HighLocality.generate(&topo, Default::default(), 2_000, 1).map_err(err)?.to_text())?;
    w("rnd.trace", &Workload::Random.generate(&topo, Default::default(), 2_000, 2).map_err(err)?.to_text())?;
    w("tl.toml", "schema_version = 1\nseed = 5\n[mechanism]\nkind = \"tldram\"\npolicy = \"bbc\"\n")?;
    w("ava.toml", "schema_version = 1\n[chip]\npreset = \"reference\"\n[mechanism]\nkind = \"ava\"\n")?;
    w("sweep.toml", "schema_version = 1\n[chip]\npreset = \"reference\"\n[sweep]\ntemps_c = [55.0, 85.0]\nrefresh_ms = [64.0, 512.0]\n")?;
    w("shuffle.toml", "schema_version = 1\n[chip]\npreset = \"clustered\"\n[shuffle_eval]\nlines = 500\n")?;
    let cmds: [&[&str]; 6] = [
        &["run", "--config", "tl.toml", "--trace", "hl.trace", "--trace", "rnd.trace"],
        &["run", "--config", "ava.toml", "--trace", "rnd.trace", "--seed", "3"],
        &["sweep", "--config", "sweep.toml"],
        &["profile", "--mode", "ava", "--config", "ava.toml"],
        &["profile", "--mode", "aldram", "--config", "ava.toml"],
        &["shuffle-eval", "--config", "shuffle.toml", "--seed", "4"],
    ];
    let mut files = 0;
    for (i, args) in cmds.iter().enumerate() {
        let mut outs = Vec::new();
        for rep in 0..2 {
            let out = format!("out{i}_{rep}");
            let mut a = args.to_vec();
            a.extend(["--out-dir", &out]);
            dramlat(dir, &a)?;
            outs.push(read_dir_sorted(&dir.join(&out))?);
        }
        ensure(!outs[0].is_empty() && outs[0] == outs[1], || format!("{args:?} outputs differ"))?;
        files += outs[0].len();
    }
    Ok(format!("{} invocations repeated, {files} output files byte-identical", cmds.len()))
}

// ------------------------------------------------------------------ main

struct Criterion {
    id: u8,
    name: &'static str,
    budget: Duration,
    check: fn() -> Outcome,
}

fn main() -> ExitCode {
    let secs = Duration::from_secs;
    let criteria = [
        Criterion { id: 1, name: "timing arithmetic", budget: secs(1), check: timing_arithmetic },
        Criterion { id: 2, name: "TL-DRAM constants", budget: secs(1), check: tldram_constants },
        Criterion { id: 3, name: "area/storage formulas", budget: secs(1), check: area_and_storage },
        Criterion { id: 4, name: "SECDED exhaustive", budget: secs(10), check: secded },
        Criterion { id: 5, name: "shuffling separation", budget: secs(60), check: shuffling },
        Criterion { id: 6, name: "profiling oracle equivalence", budget: secs(120), check: profiling_oracle },
        Criterion { id: 7, name: "safe-refresh methodology", budget: secs(60), check: safe_refresh },
        Criterion { id: 8, name: "variation-structure properties", budget: secs(300), check: variation_structure },
        Criterion { id: 9, name: "policy trends", budget: secs(300), check: policy_trends },
        Criterion { id: 10, name: "determinism", budget: secs(300), check: determinism },
    ];
    let mut passed = 0;
    for c in &criteria {
        let start = Instant::now();
        let res = catch_unwind(AssertUnwindSafe(c.check)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let took = start.elapsed();
        let res = match res {
            Ok(d) if took > c.budget => Err(format!("over budget; {d}")),
            r => r,
        };
        let (tag, detail) = match &res {
            Ok(d) => ("PASS", d),
            Err(e) => ("FAIL", e),
        };
        passed += res.is_ok() as usize;
        println!(
            "criterion {:>2} {tag} {}: {detail} [{:.2} s of {} s]",
            c.id,
            c.name,
            took.as_secs_f64(),
            c.budget.as_secs()
        );
    }
    println!("acceptance: {passed}/{} criteria passed", criteria.len());
    if passed == criteria.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
