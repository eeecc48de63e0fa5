use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dramlat::ava::{evaluate_correction, ShuffleMap};
use dramlat::dram::{Param, Ps};
use dramlat::harness::{sweep, SweepAxes, SweepTemplate};
use dramlat::presets::{clustered_setup, ChipPreset};
use dramlat::variation::{CellScope, Op, ProfileDigest, StressSet};
use dramlat::Exec;

const STRATEGIES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn digest(c: &mut Criterion) {
    let chip = ChipPreset::Reference.chip();
    let scope = CellScope::full(chip.topology());
    let mut g = c.benchmark_group("profile_digest");
    g.sample_size(10);
    for (name, exec) in STRATEGIES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| ProfileDigest::build(&chip, &scope, &StressSet::default(), exec))
        });
    }
    g.finish();
}

fn error_sweep(c: &mut Criterion) {
    let chip = ChipPreset::SigmaZeroToy.chip();
    let std = *chip.standard();
    let axes = SweepAxes {
        timings: (0..4).map(|i| std.with(Param::Trp, Ps(7_500 + 1_250 * i))).collect(),
        temps_c: vec![55.0, 85.0],
        refresh_ms: vec![64.0, 256.0],
    };
    let scope = CellScope::full(chip.topology());
    let mut g = c.benchmark_group("error_sweep");
    g.sample_size(10);
    for (name, exec) in STRATEGIES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| sweep(&chip, &axes, &SweepTemplate::new(Op::Read), &scope, exec).unwrap())
        });
    }
    g.finish();
}

fn correction(c: &mut Criterion) {
    let chip = ChipPreset::Clustered.chip();
    let setup = clustered_setup(2_000, 1);
    let mut g = c.benchmark_group("shuffle_correction");
    g.sample_size(10);
    for (name, exec) in STRATEGIES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| evaluate_correction(&chip, &setup, &ShuffleMap::rotation(), exec))
        });
    }
    g.finish();
}

criterion_group!(benches, digest, error_sweep, correction);
criterion_main!(benches);
