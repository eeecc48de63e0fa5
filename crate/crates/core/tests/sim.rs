use dramlat::aldram::*;
use dramlat::ava::ShuffleMap;
use dramlat::dram::*;
use dramlat::policies::PolicyKind;
use dramlat::presets::ChipPreset;
use dramlat::sim::*;
use dramlat::tldram::*;
use dramlat::variation::*;
use dramlat::{Error, Exec};
use proptest::prelude::*;

fn addr_of(cfg: &SimConfig, bank: u32, sub: u32, row: u32, column: u32) -> u64 {
    let map = AddressMap::new(cfg.topology.clone(), cfg.mapping, None).unwrap();
    map.encode(&Address { bank, subarray: sub, row_external: row, row_internal: row, column, ..Address::default() })
}

fn read(gap: u64, addr: u64) -> TraceRequest {
    TraceRequest { gap, op: Op::Read, addr }
}

fn write(gap: u64, addr: u64) -> TraceRequest {
    TraceRequest { gap, op: Op::Write, addr }
}

fn trace(reqs: Vec<TraceRequest>) -> Trace {
    Trace { requests: reqs }
}

fn recording() -> SimConfig {
    SimConfig { record_commands: true, ..SimConfig::default() }
}

fn segments(cfg: &SimConfig) -> SegmentConfig {
    derive_segment_timings(32, cfg.topology.rows_per_subarray, &cfg.timings, DeriveMode::Table).unwrap()
}

fn tl(cfg: &SimConfig, placement: Placement) -> Mechanism {
    Mechanism::TlDram { segments: segments(cfg), placement }
}

fn all_mechanisms(cfg: &SimConfig) -> Vec<Mechanism> {
    let mut v = vec![Mechanism::Baseline, tl(cfg, Placement::Static), tl(cfg, Placement::Profile)];
    for k in [PolicyKind::Sc, PolicyKind::Wmc, PolicyKind::Bbc] {
        v.push(tl(cfg, Placement::Inclusive(k)));
        v.push(tl(cfg, Placement::Exclusive(k)));
    }
    v
}

/// Datasheet arithmetic in controller cycles.
fn ceil_cycles(ns: f64, clock_ps: u64) -> u64 {
    ((ns * 1000.0) / clock_ps as f64).ceil() as u64
}

#[test]
fn unloaded_and_loaded_latency_on_ddr3_1066() {
    let cfg = recording();
    let clk = cfg.topology.clock_period_ps.0;
    let cyc_ns = clk as f64 / 1000.0;
    let (trcd, tras, trp, tcl, tbl) = (15.0, 37.5, 15.0, 15.0, 7.5);
    let unloaded = (ceil_cycles(trcd, clk) + ceil_cycles(tcl, clk) + ceil_cycles(tbl, clk)) as f64 * cyc_ns;
    let loaded = (ceil_cycles(tras, clk) + ceil_cycles(trp, clk) + ceil_cycles(trcd, clk) + ceil_cycles(tcl, clk) + ceil_cycles(tbl, clk))
        as f64
        * cyc_ns;

    let one = run_simulation(&cfg, &Mechanism::Baseline, None, &[trace(vec![read(0, addr_of(&cfg, 0, 0, 5, 0))])]).unwrap();
    assert!((one.aggregate.avg_read_latency_ns - 37.5).abs() <= cyc_ns);
    assert_eq!(one.aggregate.avg_read_latency_ns, unloaded);

    let two = trace(vec![read(0, addr_of(&cfg, 0, 0, 5, 0)), read(0, addr_of(&cfg, 0, 0, 9, 0))]);
    let r = run_simulation(&cfg, &Mechanism::Baseline, None, &[two]).unwrap();
    let acts: Vec<_> = r.commands.iter().filter(|c| c.cmd.kind == CommandKind::Act).collect();
    let rds: Vec<_> = r.commands.iter().filter(|c| c.cmd.kind == CommandKind::Rd).collect();
    assert_eq!((acts.len(), rds.len()), (2, 2));
    let second_done = rds[1].cmd.issue + rds[1].timings.tcl + rds[1].timings.tbl;
    let since_first_act = (second_done - acts[0].cmd.issue) as f64 * cyc_ns;
    assert!(since_first_act >= 90.0 - cyc_ns && (since_first_act - 90.0).abs() <= cyc_ns, "{since_first_act}");
    assert_eq!(since_first_act, loaded);
    // Both requests arrive at cycle 0, so the mean is (unloaded + loaded) / 2.
    assert_eq!(r.aggregate.avg_read_latency_ns, (unloaded + loaded) / 2.0);
}

fn q(id: u64, sub: u32, row: u32) -> QueuedRequest {
    QueuedRequest { id, arrival: 0, subarray: sub, row, is_write: false }
}

#[test]
fn frfcfs_rules() {
    let t = TimingParams::ddr3_1066().cycles(Ps(1_875));
    let closed = BankState::default();
    // Single request to a closed bank.
    let s = frfcfs_select(&[vec![q(0, 0, 7)]], &[closed], &t, RowPolicy::Open, 0).unwrap();
    assert_eq!((s.bank, s.kind, s.request), (0, CommandKind::Act, Some(0)));
    // Empty queues.
    assert_eq!(frfcfs_select(&[vec![], vec![]], &[closed, closed], &t, RowPolicy::Open, 0), None);

    // Row A (row 3) open; the older request targets closed row B.
    let a = Address { row_external: 3, row_internal: 3, ..Address::default() };
    let open = closed.apply_command(&Command::new(CommandKind::Act, a, 0), &t).unwrap();
    let queue = vec![q(0, 0, 9), q(1, 0, 3)];
    // Nothing is legal before tRCD elapses.
    assert_eq!(frfcfs_select(&[queue.clone()], &[open], &t, RowPolicy::Open, 1), None);
    let s = frfcfs_select(&[queue.clone()], &[open], &t, RowPolicy::Open, t.trcd).unwrap();
    assert_eq!((s.kind, s.request), (CommandKind::Rd, Some(1)));
    // Once the hit is served the old request's precharge follows after tRAS.
    let s = frfcfs_select(&[vec![q(0, 0, 9)]], &[open], &t, RowPolicy::Open, t.tras).unwrap();
    assert_eq!((s.kind, s.request), (CommandKind::Pre, Some(0)));
    // Across banks: a hit on bank 1 beats an older ACT on bank 0.
    let s = frfcfs_select(&[vec![q(0, 0, 1)], vec![q(5, 0, 3)]], &[closed, open], &t, RowPolicy::Open, t.trcd).unwrap();
    assert_eq!((s.bank, s.kind), (1, CommandKind::Rd));
    // Idle open bank: closed-row policy precharges it, open-row policy keeps it.
    assert_eq!(frfcfs_select(&[vec![]], &[open], &t, RowPolicy::Open, 100), None);
    assert_eq!(frfcfs_select(&[vec![]], &[open], &t, RowPolicy::Closed, 100).unwrap().kind, CommandKind::Pre);
}

#[test]
fn row_hits_are_served_from_the_open_row() {
    let cfg = SimConfig { row_policy: RowPolicy::Open, ..recording() };
    let reqs = vec![read(0, addr_of(&cfg, 0, 0, 5, 0)), read(0, addr_of(&cfg, 0, 0, 5, 1)), read(0, addr_of(&cfg, 0, 0, 6, 0))];
    let r = run_simulation(&cfg, &Mechanism::Baseline, None, &[trace(reqs)]).unwrap();
    let s = r.aggregate;
    assert_eq!((s.row_buffer_hits, s.far_accesses), (1, 2));
    let kinds: Vec<_> = r.commands.iter().map(|c| c.cmd.kind).collect();
    use CommandKind::*;
    assert_eq!(&kinds[..5], &[Act, Rd, Rd, Pre, Act]);
}

#[test]
fn trace_parsing() {
    let t = Trace::parse("# header\n0 R 0x40\n\n12 W ff  # trailing\n3 r 0X1000\n").unwrap();
    assert_eq!(t.requests, vec![read(0, 0x40), write(12, 0xff), read(3, 0x1000)]);
    assert_eq!(t.instructions(), 1 + 13 + 4);
    assert_eq!(Trace::parse(&t.to_text()).unwrap(), t);
    for (text, line) in [("0 R 0x0\n1 X 0x0\n", 2), ("0 R\n", 1), ("\n# c\n-1 R 0x0\n", 3), ("0 R 0xzz\n", 1), ("0 R 1 2\n", 1)] {
        match Trace::parse(text) {
            Err(Error::Trace { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
            other => panic!("{text:?}: {other:?}"),
        }
    }
    let cfg = SimConfig::default();
    assert!(matches!(run_simulation(&cfg, &Mechanism::Baseline, None, &[Trace::default()]), Err(Error::Config(_))));
    assert!(matches!(run_simulation(&cfg, &Mechanism::Baseline, None, &[]), Err(Error::Config(_))));
    let t = [trace(vec![read(0, 0)])];
    let tight = SimConfig { refresh_ms: 0.5, ..SimConfig::default() };
    assert!(matches!(run_simulation(&tight, &Mechanism::Baseline, None, &t), Err(Error::Config(_))));
}

#[test]
fn weighted_speedup_arithmetic() {
    let base = [0.5, 1.25, 2.0];
    assert_eq!(weighted_speedup(&base, &base).unwrap(), 3.0);
    assert_eq!(weighted_speedup(&[2.0, 1.0], &[1.0, 1.0]).unwrap(), 3.0);
    assert!(matches!(weighted_speedup(&[1.0], &[1.0, 1.0]), Err(Error::Config(_))));
    assert!(matches!(weighted_speedup(&[1.0], &[0.0]), Err(Error::Config(_))));
}

#[test]
fn energy_accounting() {
    let cfg = SimConfig { refresh: false, ..recording() };
    let topo = &cfg.topology;
    let segs = segments(&cfg);
    let e = EnergyModel::default();
    assert_eq!(account_energy(&[], &segs, topo, &e), 0.0);

    // Near rows 0..32 against far rows 100..132, same access pattern.
    let run = |base: u32| {
        let reqs = (0..32).map(|i| read(10, addr_of(&cfg, i % 8, 0, base + i, 0))).collect();
        run_simulation(&cfg, &tl(&cfg, Placement::Static), None, &[trace(reqs)]).unwrap()
    };
    let (near, far) = (run(0), run(100));
    assert_eq!((near.aggregate.near_hits, far.aggregate.far_accesses), (32, 32));
    assert!(near.aggregate.energy_units < far.aggregate.energy_units);
    for r in [&near, &far] {
        assert!((account_energy(&r.commands, &segs, topo, &e) - r.aggregate.energy_units).abs() < 1e-9);
    }

    // Appending one far ACT adds exactly its own energy.
    let mut log = far.commands.clone();
    let before = account_energy(&log, &segs, topo, &e);
    let a = Address { row_external: 400, row_internal: 400, ..Address::default() };
    let act = Command::new(CommandKind::Act, a, 1_000_000).with_tier(1);
    log.push(LoggedCommand { bank: 0, cmd: act, timings: segs.far().cycles(topo.clock_period_ps) });
    let after = account_energy(&log, &segs, topo, &e);
    assert!((after - before - command_energy(&act, &segs, topo)).abs() < 1e-9);
}

#[test]
fn refresh_is_issued_on_every_bank_and_costed_once_per_rank() {
    let cfg = SimConfig { refresh_ms: 4.0, ..recording() };
    let long = trace(vec![read(0, addr_of(&cfg, 0, 0, 1, 0)), read(200_000, addr_of(&cfg, 1, 0, 1, 0))]);
    let r = run_simulation(&cfg, &Mechanism::Baseline, None, &[long]).unwrap();
    let refs: Vec<_> = r.commands.iter().filter(|c| c.cmd.kind == CommandKind::Ref).collect();
    let banks = cfg.topology.banks_total() as usize;
    assert!(refs.len() >= banks && refs.len() % banks == 0, "{}", refs.len());
    check_log(&r.commands).unwrap();
    let segs = SegmentConfig::unsegmented(cfg.topology.rows_per_subarray, cfg.timings);
    let per_rank = command_energy(&refs[0].cmd, &segs, &cfg.topology);
    let rounds = (refs.len() / banks) as f64;
    let non_ref: Vec<_> = r.commands.iter().filter(|c| c.cmd.kind != CommandKind::Ref).copied().collect();
    let want = account_energy(&non_ref, &segs, &cfg.topology, &cfg.energy) + rounds * per_rank;
    assert!((r.aggregate.energy_units - want).abs() < 1e-6);
}

#[test]
fn conservation_legality_and_determinism_for_every_mechanism() {
    let cfg = SimConfig { refresh_ms: 2.0, ..recording() };
    let traces = [
        Workload::HighLocality.generate(&cfg.topology, cfg.mapping, 3000, 4).unwrap(),
        Workload::Random.generate(&cfg.topology, cfg.mapping, 2000, 5).unwrap(),
    ];
    for m in all_mechanisms(&cfg) {
        let r = run_simulation(&cfg, &m, None, &traces).unwrap();
        check_log(&r.commands).unwrap_or_else(|v| panic!("{}: {v:?}", m.name()));
        for (s, t) in r.per_core.iter().zip(&traces) {
            assert_eq!(s.reads as usize, t.reads());
            assert_eq!((s.reads + s.writes) as usize, t.len());
            assert_eq!(s.row_buffer_hits + s.near_hits + s.far_accesses, s.reads + s.writes, "{}", m.name());
            assert_eq!(s.instructions, t.instructions());
            assert!(s.cycles > 0);
            let f = s.row_buffer_frac() + s.near_frac() + s.far_frac();
            assert!((f - 1.0).abs() < 1e-12);
        }
        let rd = r.commands.iter().filter(|c| c.cmd.kind == CommandKind::Rd).count();
        assert_eq!(rd, traces.iter().map(Trace::reads).sum::<usize>());
        assert_eq!(run_simulation(&cfg, &m, None, &traces).unwrap(), r, "{}", m.name());
    }
}

#[test]
fn inclusive_caching_turns_repeat_activations_into_near_hits() {
    let cfg = recording();
    let a = addr_of(&cfg, 0, 0, 200, 0);
    let reqs = vec![read(0, a), read(2_000, a), read(2_000, a)];
    for k in [PolicyKind::Sc, PolicyKind::Bbc] {
        let r = run_simulation(&cfg, &tl(&cfg, Placement::Inclusive(k)), None, &[trace(reqs.clone())]).unwrap();
        let s = r.aggregate;
        assert_eq!((s.far_accesses, s.near_hits, s.caching_transfers), (1, 2, 1));
        let acts: Vec<u32> = r.commands.iter().filter(|c| c.cmd.kind == CommandKind::Act).map(|c| c.cmd.row()).collect();
        assert_eq!(acts[0], 32 + 200);
        assert!(acts[1] < 32 && acts[1] == acts[2]);
        let x = r.commands.iter().find(|c| c.cmd.kind == CommandKind::Transfer).unwrap();
        assert_eq!(x.cmd.row(), acts[1]);
    }
    // Exclusive caching migrates the row by three copies through the dummy.
    let r = run_simulation(&cfg, &tl(&cfg, Placement::Exclusive(PolicyKind::Sc)), None, &[trace(reqs)]).unwrap();
    assert_eq!(r.aggregate.caching_transfers, 3);
    assert_eq!(r.aggregate.near_hits, 2);
}

#[test]
fn wmc_caches_only_wait_inducing_rows() {
    let cfg = recording();
    let m = tl(&cfg, Placement::Inclusive(PolicyKind::Wmc));
    // A lone row revisited after a long gap never made anyone wait.
    let lone = vec![read(0, addr_of(&cfg, 0, 0, 300, 0)), read(4_000, addr_of(&cfg, 0, 0, 300, 0))];
    let r = run_simulation(&cfg, &m, None, &[trace(lone)]).unwrap();
    assert_eq!((r.aggregate.caching_transfers, r.aggregate.near_hits), (0, 0));
    // A conflicting request to the same subarray arrives during the
    // activation, so the first row gets cached once closed.
    let busy = vec![read(0, addr_of(&cfg, 0, 0, 300, 0)), read(0, addr_of(&cfg, 0, 0, 301, 0)), read(4_000, addr_of(&cfg, 0, 0, 300, 0))];
    let r = run_simulation(&cfg, &m, None, &[trace(busy)]).unwrap();
    assert_eq!(r.aggregate.caching_transfers, 1);
    assert_eq!(r.aggregate.near_hits, 1);
    check_log(&r.commands).unwrap();
}

#[test]
fn high_locality_policy_ordering() {
    let cfg = SimConfig::default();
    for seed in 1..=3 {
        let t = [Workload::HighLocality.generate(&cfg.topology, cfg.mapping, 20_000, seed).unwrap()];
        let lat = |m: &Mechanism| run_simulation(&cfg, m, None, &t).unwrap().aggregate;
        let base = lat(&Mechanism::Baseline);
        let sc = lat(&tl(&cfg, Placement::Inclusive(PolicyKind::Sc)));
        let bbc = lat(&tl(&cfg, Placement::Inclusive(PolicyKind::Bbc)));
        assert!(bbc.avg_read_latency_ns <= sc.avg_read_latency_ns, "seed {seed}: {bbc:?} vs {sc:?}");
        assert!(sc.avg_read_latency_ns <= base.avg_read_latency_ns, "seed {seed}");
        assert!(bbc.near_frac() + bbc.row_buffer_frac() > 0.9, "seed {seed}: {bbc:?}");
    }
}

#[test]
fn random_high_intensity_pays_the_far_row_cycle() {
    let cfg = SimConfig::default();
    for seed in 1..=3 {
        let t = [Workload::Random.generate(&cfg.topology, cfg.mapping, 20_000, seed).unwrap()];
        let base = run_simulation(&cfg, &Mechanism::Baseline, None, &t).unwrap().aggregate;
        for k in [PolicyKind::Sc, PolicyKind::Bbc] {
            let inc = run_simulation(&cfg, &tl(&cfg, Placement::Inclusive(k)), None, &t).unwrap().aggregate;
            assert!(inc.avg_read_latency_ns >= base.avg_read_latency_ns, "seed {seed} {k:?}");
        }
    }
}

#[test]
fn two_core_bbc_weighted_speedup_beats_baseline() {
    let cfg = SimConfig::default();
    let traces: Vec<Trace> =
        (0..2).map(|c| Workload::HighLocality.generate(&cfg.topology, cfg.mapping, 20_000, 10 + c).unwrap()).collect();
    let ipc = |m: &Mechanism| -> Vec<f64> {
        run_simulation(&cfg, m, None, &traces).unwrap().per_core.iter().map(|s| s.ipc_proxy).collect()
    };
    let base = ipc(&Mechanism::Baseline);
    let bbc = ipc(&tl(&cfg, Placement::Inclusive(PolicyKind::Bbc)));
    let ws_base = weighted_speedup(&base, &base).unwrap();
    let ws = weighted_speedup(&bbc, &base).unwrap();
    assert_eq!(ws_base, 2.0);
    assert!(ws > ws_base, "{ws}");
}

fn reference_table(chip: &ChipModel) -> TimingTable {
    let d = ProfileDigest::build(chip, &CellScope::full(chip.topology()), &StressSet::default(), Exec::Parallel);
    let refresh = safe_refresh_intervals(chip, &d, &RefreshSearch::default()).unwrap();
    let std = *chip.standard();
    let cfg = Identify { temps_c: DEFAULT_TEMPS_C.to_vec(), grid: TimingGrid::aldram(&std), refresh };
    identify_timing_table(chip, &d, &cfg, Exec::Parallel).unwrap()
}

#[test]
fn enforced_adaptive_timings_are_error_free_and_faster() {
    let chip = ChipPreset::Reference.chip();
    let table = reference_table(&chip);
    let cfg = SimConfig::for_chip(&chip);
    // Warms from 45 to 60 degC across the run.
    let temps = TemperatureTrace::new(vec![(0.0, 45.0), (0.05, 50.0), (0.1, 55.0), (0.2, 60.0)]).unwrap();
    let timeline = enforce_timings(&table, &temps, 1).unwrap();
    for w in Workload::ALL {
        let t = [w.generate(&cfg.topology, cfg.mapping, 8_000, 3).unwrap()];
        let std = run_simulation(&cfg, &Mechanism::Baseline, Some(&chip), &t).unwrap().aggregate;
        let al = run_simulation(&cfg, &Mechanism::AlDram { timeline: timeline.clone(), temperature: temps.clone() }, Some(&chip), &t)
            .unwrap()
            .aggregate;
        assert_eq!((al.timing_errors, al.errors_injected), (0, 0), "{}", w.name());
        assert_eq!(std.errors_injected, 0);
        assert!(al.avg_read_latency_ns < std.avg_read_latency_ns, "{}", w.name());
    }
}

#[test]
fn over_aggressive_timings_inject_errors_through_ecc() {
    let chip = ChipPreset::Reference.chip();
    let cfg = SimConfig::for_chip(&chip);
    let std = *chip.standard();
    let fast = std.with_core(Ps(5_000), Ps(12_500), Ps(5_000), Ps(5_000));
    let t = [Workload::Random.generate(&cfg.topology, cfg.mapping, 2_000, 9).unwrap()];
    let mech = Mechanism::Ava { timings: fast, shuffle: ShuffleMap::rotation(), reserved_rows: vec![0, 127] };
    let s = run_simulation(&cfg, &mech, Some(&chip), &t).unwrap().aggregate;
    assert!(s.errors_injected > 0);
    assert_eq!(s.errors_injected, s.timing_errors + s.retention_errors);
    assert_eq!(s.errors_injected, s.errors_corrected + s.errors_uncorrectable);
    // Mismatched organization is rejected.
    let other = SimConfig::default();
    assert!(matches!(run_simulation(&other, &mech, Some(&chip), &t), Err(Error::Config(_))));
}

#[test]
fn ava_mapping_skips_reserved_rows() {
    let cfg = recording();
    let std = cfg.timings;
    let mech = Mechanism::Ava { timings: std, shuffle: ShuffleMap::identity(), reserved_rows: vec![0, 511] };
    let reqs = (0..4).map(|r| read(50, addr_of(&cfg, 0, 0, r, 0))).collect();
    let r = run_simulation(&cfg, &mech, None, &[trace(reqs)]).unwrap();
    let rows: Vec<u32> = r.commands.iter().filter(|c| c.cmd.kind == CommandKind::Act).map(|c| c.cmd.row()).collect();
    assert_eq!(rows, vec![1, 2, 3, 4]);
}

prop_compose! {
    fn small_trace()(reqs in prop::collection::vec((0u64..40, any::<bool>(), 0u32..8, 0u32..2, 0u32..6, 0u32..4), 1..60)) -> Vec<(u64, bool, u32, u32, u32, u32)> {
        reqs
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn random_traces_complete_legally(reqs in small_trace(), policy in prop::sample::select(vec![RowPolicy::Open, RowPolicy::Closed]), mi in 0usize..9) {
        let cfg = SimConfig { row_policy: policy, refresh_ms: 2.0, ..recording() };
        let t = trace(reqs.iter().map(|&(g, w, b, s, r, c)| {
            let a = addr_of(&cfg, b, s, r, c);
            if w { write(g, a) } else { read(g, a) }
        }).collect());
        let m = &all_mechanisms(&cfg)[mi];
        let r = run_simulation(&cfg, m, None, std::slice::from_ref(&t)).unwrap();
        prop_assert!(check_log(&r.commands).is_ok(), "{:?}", check_log(&r.commands));
        let s = r.aggregate;
        prop_assert_eq!(s.reads as usize, t.reads());
        prop_assert_eq!(s.row_buffer_hits + s.near_hits + s.far_accesses, t.len() as u64);
        let rd = r.commands.iter().filter(|c| c.cmd.kind == CommandKind::Rd).count();
        let wr = r.commands.iter().filter(|c| c.cmd.kind == CommandKind::Wr).count();
        prop_assert_eq!(rd + wr, t.len());
        // Unloaded reads can never beat the datasheet path.
        if s.reads > 0 {
            prop_assert!(s.avg_read_latency_ns >= 8.2 + 15.0 + 7.5 - 1e-9);
        }
    }

    #[test]
    fn trace_text_round_trips(reqs in prop::collection::vec((0u64..1_000_000, any::<bool>(), any::<u64>()), 0..40)) {
        let t = trace(reqs.into_iter().map(|(g, w, a)| if w { write(g, a) } else { read(g, a) }).collect());
        prop_assert_eq!(Trace::parse(&t.to_text()).unwrap(), t);
    }
}
