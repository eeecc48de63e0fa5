//! Exact summary of a cell population for pass/fail queries.
//!
//! A cell's requirement for one parameter is increasing in its nominal value
//! and decreasing in its retention, so for any (temperature, refresh,
//! shortfall) the worst cell lies on the Pareto frontier of
//! (max nominal, min retention). Keeping only that frontier answers
//! "does any cell fail?" with the same arithmetic as the per-cell oracle.

use crate::dram::{Ps, TimingParams};
use crate::exec::Exec;

use super::{retention_at, CellProfile, CellScope, ChipModel, Op, Stress};

#[derive(Debug, Clone, Default, PartialEq)]
struct Frontier {
    pts: Vec<(f64, f64)>,
}

impl Frontier {
    fn insert(&mut self, nominal: f64, ret: f64) {
        if self.pts.iter().any(|&(n, r)| n >= nominal && r <= ret) {
            return;
        }
        self.pts.retain(|&(n, r)| !(nominal >= n && ret <= r));
        self.pts.push((nominal, ret));
    }

    fn merge(mut self, other: &Frontier) -> Frontier {
        for &(n, r) in &other.pts {
            self.insert(n, r);
        }
        self
    }

    fn canonical(mut self) -> Frontier {
        self.pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        self
    }
}

/// Worst-case summary of every cell in a scope under a set of stresses of a
/// single operation.
#[derive(Debug, Clone, PartialEq)]
pub struct OpDigest {
    op: Op,
    frontiers: [Frontier; 4],
    min_retention85_ms: f64,
    cells: usize,
}

impl OpDigest {
    fn empty(op: Op) -> Self {
        OpDigest { op, frontiers: Default::default(), min_retention85_ms: f64::INFINITY, cells: 0 }
    }

    fn add(&mut self, p: &CellProfile) {
        for param in self.op.params() {
            let i = param as usize;
            self.frontiers[i].insert(p.nominal[i], p.retention85_ms);
        }
        self.min_retention85_ms = self.min_retention85_ms.min(p.retention85_ms);
        self.cells += 1;
    }

    fn merge(mut self, other: OpDigest) -> OpDigest {
        for i in 0..4 {
            self.frontiers[i] = std::mem::take(&mut self.frontiers[i]).merge(&other.frontiers[i]);
        }
        self.min_retention85_ms = self.min_retention85_ms.min(other.min_retention85_ms);
        self.cells += other.cells;
        self
    }

    /// Summarize `scope` under `stresses` (all of operation `op`).
    pub fn build(chip: &ChipModel, scope: &CellScope, op: Op, stresses: &[Stress], exec: Exec) -> OpDigest {
        assert!(stresses.iter().all(|s| s.op == op), "stresses must share the digest's op");
        let d = exec.map_reduce(
            scope.row_count(),
            OpDigest::empty(op),
            |i| {
                let mut d = OpDigest::empty(op);
                for c in scope.row_cells(i) {
                    for s in stresses {
                        d.add(&chip.profile(&c, s));
                    }
                }
                d
            },
            OpDigest::merge,
        );
        let OpDigest { op, frontiers, min_retention85_ms, cells } = d;
        OpDigest { op, frontiers: frontiers.map(Frontier::canonical), min_retention85_ms, cells }
    }

    pub fn op(&self) -> Op {
        self.op
    }

    /// Number of (cell, stress) evaluations summarized.
    pub fn evaluations(&self) -> usize {
        self.cells
    }

    pub fn min_retention_ms(&self, temp_c: f64) -> f64 {
        retention_at(self.min_retention85_ms, temp_c)
    }

    /// Largest per-cell requirement in ps for each checked parameter (0 for
    /// unchecked ones), given the applied restore shortfall.
    pub fn worst_required(&self, chip: &ChipModel, temp_c: f64, refresh_ms: f64, shortfall: f64) -> [Ps; 4] {
        let req = chip.requirement_model();
        let mut out = [Ps(0); 4];
        for param in self.op.params() {
            let i = param as usize;
            for &(n, r) in &self.frontiers[i].pts {
                let mut nominal = [0.0; 4];
                nominal[i] = n;
                let v = req.required(&CellProfile { nominal, retention85_ms: r }, temp_c, refresh_ms, shortfall)[i];
                out[i] = out[i].max(Ps(v.ceil() as u64));
            }
        }
        out
    }

    /// `true` iff no summarized cell fails with `applied`.
    pub fn passes(&self, chip: &ChipModel, applied: &TimingParams, temp_c: f64, refresh_ms: f64) -> bool {
        if self.cells == 0 {
            return true;
        }
        if refresh_ms > self.min_retention_ms(temp_c) {
            return false;
        }
        let s = chip.requirement_model().shortfall(applied, self.op);
        let worst = self.worst_required(chip, temp_c, refresh_ms, s);
        self.op.params().iter().all(|&p| applied.get(p) >= worst[p as usize])
    }
}

/// Read and write digests of the same scope.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileDigest {
    pub read: OpDigest,
    pub write: OpDigest,
}

impl ProfileDigest {
    /// Digest under every listed pattern and iteration, for both operations.
    pub fn build(chip: &ChipModel, scope: &CellScope, spec: &StressSet, exec: Exec) -> Self {
        ProfileDigest {
            read: OpDigest::build(chip, scope, Op::Read, &spec.stresses(Op::Read), exec),
            write: OpDigest::build(chip, scope, Op::Write, &spec.stresses(Op::Write), exec),
        }
    }

    pub fn get(&self, op: Op) -> &OpDigest {
        match op {
            Op::Read => &self.read,
            Op::Write => &self.write,
        }
    }
}

/// Test conditions a profiling run covers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StressSet {
    pub patterns: Vec<super::Pattern>,
    pub iterations: u32,
}

impl Default for StressSet {
    /// The single default condition, which is also what online accesses see.
    fn default() -> Self {
        StressSet { patterns: vec![super::Pattern::P0000], iterations: 1 }
    }
}

impl StressSet {
    pub fn stresses(&self, op: Op) -> Vec<Stress> {
        let mut v = Vec::new();
        for &p in &self.patterns {
            for i in 0..self.iterations {
                v.push(Stress::new(op).with_pattern(p).with_iteration(i));
            }
        }
        v
    }
}
