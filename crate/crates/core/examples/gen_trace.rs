//! Write a synthetic trace to stdout.
//!
//! `cargo run --example gen_trace -- <high_locality|random> <requests> <seed> [chip preset]`
//!
//! Addresses target the default organization or that of the named chip
//! preset.

use std::io::Write;
use std::process::ExitCode;

use dramlat::dram::MappingScheme;
use dramlat::presets::ChipPreset;
use dramlat::sim::Workload;

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let usage = || {
        eprintln!("usage: gen_trace <high_locality|random> <requests> <seed> [chip preset]");
        ExitCode::from(2)
    };
    let (Some(w), Some(n), Some(seed)) = (
        args.first().and_then(|s| Workload::parse(s)),
        args.get(1).and_then(|s| s.parse::<usize>().ok()),
        args.get(2).and_then(|s| s.parse::<u64>().ok()),
    ) else {
        return usage();
    };
    let topo = match args.get(3) {
        None => ChipPreset::Default.topology(),
        Some(name) => match ChipPreset::parse(name) {
            Some(p) => p.topology(),
            None => return usage(),
        },
    };
    match w.generate(&topo, MappingScheme::RowInterleaved, n, seed) {
        Ok(t) => {
            let _ = std::io::stdout().write_all(t.to_text().as_bytes());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("gen_trace: {e}");
            ExitCode::from(2)
        }
    }
}
