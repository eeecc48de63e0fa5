//! Near-segment management: which far rows get a copy (inclusive) or a home
//! (exclusive) in the near segment, and what the controller must do about it.
//!
//! Rows are identified by a per-subarray row tag: for inclusive caching the
//! tag is the far row index (physical row `near_rows + tag`); for exclusive
//! caching it is the external row index.

use serde::{Deserialize, Serialize};

use crate::dram::Cycle;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    /// Simple caching: LRU.
    Sc,
    /// Wait-minimized caching: only wait-inducing rows.
    Wmc,
    /// Benefit-based caching.
    Bbc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AccessClass {
    RowBufferHit,
    NearHit,
    NearMiss,
}

/// Work the controller performs on behalf of the policy, in order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    /// Copy the dirty near slot back to its far row before reuse.
    Writeback { slot: u32, tag: u32 },
    /// Copy the far row `tag` into `slot` (inclusive).
    Cache { slot: u32, tag: u32 },
    /// Exchange the near row in `slot` (holding `victim`) with far-resident
    /// `tag` (exclusive).
    Swap { slot: u32, tag: u32, victim: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccessOutcome {
    pub class: AccessClass,
    /// Near slot holding the row after the access, if any.
    pub slot: Option<u32>,
    pub actions: Vec<Action>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Entry {
    tag: u32,
    dirty: bool,
    /// LRU stamp (SC) or wait-recency stamp (WMC).
    stamp: u64,
    benefit: u8,
    inserted: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct SubarrayCache {
    slots: Vec<Option<Entry>>,
}

/// Per-subarray near-slot tables under one policy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CacheState {
    kind: PolicyKind,
    exclusive: bool,
    near_rows: u32,
    subs: Vec<SubarrayCache>,
    clock: u64,
    /// BBC: halve all benefits of a subarray on every eviction in it.
    pub bbc_decay: bool,
    /// BBC: accumulated benefit increments (for accounting checks).
    pub benefit_added: u64,
}

impl CacheState {
    /// Empty inclusive cache over `subarrays` subarrays.
    pub fn inclusive(kind: PolicyKind, subarrays: usize, near_rows: u32) -> Self {
        CacheState {
            kind,
            exclusive: false,
            near_rows,
            subs: vec![SubarrayCache { slots: vec![None; near_rows as usize] }; subarrays],
            clock: 0,
            bbc_decay: true,
            benefit_added: 0,
        }
    }

    /// Exclusive cache whose near slot `k` initially holds external row `k`.
    pub fn exclusive(kind: PolicyKind, subarrays: usize, near_rows: u32) -> Self {
        let mut s = Self::inclusive(kind, subarrays, near_rows);
        s.exclusive = true;
        for sub in &mut s.subs {
            for (k, slot) in sub.slots.iter_mut().enumerate() {
                *slot = Some(Entry { tag: k as u32, dirty: false, stamp: 0, benefit: 0, inserted: 0 });
            }
        }
        s
    }

    pub fn kind(&self) -> PolicyKind {
        self.kind
    }

    pub fn is_exclusive(&self) -> bool {
        self.exclusive
    }

    pub fn near_rows(&self) -> u32 {
        self.near_rows
    }

    pub fn lookup(&self, sub: usize, tag: u32) -> Option<u32> {
        self.subs[sub].slots.iter().position(|e| e.is_some_and(|e| e.tag == tag)).map(|k| k as u32)
    }

    /// Tags currently held by `sub`, by slot.
    pub fn tags(&self, sub: usize) -> Vec<Option<u32>> {
        self.subs[sub].slots.iter().map(|e| e.map(|e| e.tag)).collect()
    }

    pub fn benefits(&self, sub: usize) -> Vec<Option<u8>> {
        self.subs[sub].slots.iter().map(|e| e.map(|e| e.benefit)).collect()
    }

    pub fn is_dirty(&self, sub: usize, slot: u32) -> bool {
        self.subs[sub].slots[slot as usize].is_some_and(|e| e.dirty)
    }

    fn tick(&mut self) -> u64 {
        self.clock += 1;
        self.clock
    }

    /// Slot to fill: a free one first, otherwise the policy's victim.
    fn victim(&self, sub: usize) -> (u32, bool) {
        let slots = &self.subs[sub].slots;
        if let Some(k) = slots.iter().position(Option::is_none) {
            return (k as u32, false);
        }
        let key = |e: &Entry| match self.kind {
            PolicyKind::Sc | PolicyKind::Wmc => (e.stamp, e.inserted, 0),
            PolicyKind::Bbc => (e.benefit as u64, e.inserted, 0),
        };
        let k = (0..slots.len()).min_by_key(|&k| (key(slots[k].as_ref().unwrap()), k)).unwrap();
        (k as u32, true)
    }

    /// Place `tag` into the victim slot and return the actions required.
    fn fill(&mut self, sub: usize, tag: u32) -> (u32, Vec<Action>) {
        let (slot, evict) = self.victim(sub);
        let now = self.tick();
        let mut actions = Vec::new();
        let old = self.subs[sub].slots[slot as usize];
        if self.exclusive {
            let victim = old.expect("exclusive slots are always occupied").tag;
            actions.push(Action::Swap { slot, tag, victim });
        } else {
            if let Some(e) = old.filter(|e| e.dirty) {
                actions.push(Action::Writeback { slot, tag: e.tag });
            }
            actions.push(Action::Cache { slot, tag });
        }
        if evict && self.kind == PolicyKind::Bbc && self.bbc_decay {
            for e in self.subs[sub].slots.iter_mut().flatten() {
                e.benefit /= 2;
            }
        }
        self.subs[sub].slots[slot as usize] = Some(Entry { tag, dirty: false, stamp: now, benefit: 0, inserted: now });
        (slot, actions)
    }

    fn mark_write(&mut self, sub: usize, slot: Option<u32>, is_write: bool) {
        if let (Some(k), true, false) = (slot, is_write, self.exclusive) {
            if let Some(e) = self.subs[sub].slots[k as usize].as_mut() {
                e.dirty = true;
            }
        }
    }

    fn classify(&self, sub: usize, tag: u32, row_buffer_hit: bool) -> (AccessClass, Option<u32>) {
        let slot = self.lookup(sub, tag);
        let class = match (row_buffer_hit, slot) {
            (true, _) => AccessClass::RowBufferHit,
            (false, Some(_)) => AccessClass::NearHit,
            (false, None) => AccessClass::NearMiss,
        };
        (class, slot)
    }

    /// Simple caching. Row-buffer hits leave the LRU order untouched; near
    /// hits become MRU; misses evict the LRU slot and cache the row as MRU.
    pub fn sc_on_access(&mut self, sub: usize, tag: u32, row_buffer_hit: bool, is_write: bool) -> AccessOutcome {
        let (class, mut slot) = self.classify(sub, tag, row_buffer_hit);
        let mut actions = Vec::new();
        match class {
            AccessClass::RowBufferHit => {}
            AccessClass::NearHit => {
                let now = self.tick();
                self.subs[sub].slots[slot.unwrap() as usize].as_mut().unwrap().stamp = now;
            }
            AccessClass::NearMiss => {
                let (k, a) = self.fill(sub, tag);
                slot = Some(k);
                actions = a;
            }
        }
        self.mark_write(sub, slot, is_write);
        AccessOutcome { class, slot, actions }
    }

    /// Wait-minimized caching, access half: classification only. Caching
    /// and recency updates happen at precharge, once it is known whether the
    /// activation induced a wait.
    pub fn wmc_on_access(&mut self, sub: usize, tag: u32, row_buffer_hit: bool, is_write: bool) -> AccessOutcome {
        let (class, slot) = self.classify(sub, tag, row_buffer_hit);
        self.mark_write(sub, slot, is_write);
        AccessOutcome { class, slot, actions: Vec::new() }
    }

    /// Wait-minimized caching, precharge half. A wait-inducing far row is
    /// cached (evicting the least-recently wait-inducing row); a
    /// wait-inducing near row has its wait recency refreshed.
    pub fn wmc_on_precharge(&mut self, sub: usize, tag: u32, wait_inducing: bool) -> Vec<Action> {
        if !wait_inducing {
            return Vec::new();
        }
        match self.lookup(sub, tag) {
            Some(k) => {
                let now = self.tick();
                self.subs[sub].slots[k as usize].as_mut().unwrap().stamp = now;
                Vec::new()
            }
            None => self.fill(sub, tag).1,
        }
    }

    /// Benefit-based caching, access half. A near hit earns the activation
    /// cycles it saved; a far access is cached at once over the
    /// minimum-benefit row.
    pub fn bbc_on_access(&mut self, sub: usize, tag: u32, row_buffer_hit: bool, is_write: bool, trcd_saving: Cycle) -> AccessOutcome {
        let (class, mut slot) = self.classify(sub, tag, row_buffer_hit);
        let mut actions = Vec::new();
        match class {
            AccessClass::RowBufferHit => {}
            AccessClass::NearHit => self.add_benefit(sub, slot.unwrap(), trcd_saving),
            AccessClass::NearMiss => {
                let (k, a) = self.fill(sub, tag);
                slot = Some(k);
                actions = a;
            }
        }
        self.mark_write(sub, slot, is_write);
        AccessOutcome { class, slot, actions }
    }

    /// Benefit-based caching, precharge half: a near row whose activation a
    /// queued request waited on earns the wait it shortened.
    pub fn bbc_on_precharge(&mut self, sub: usize, tag: u32, wait_saving: Cycle) {
        if let Some(k) = self.lookup(sub, tag) {
            self.add_benefit(sub, k, wait_saving);
        }
    }

    fn add_benefit(&mut self, sub: usize, slot: u32, cycles: Cycle) {
        if cycles == 0 {
            return;
        }
        self.benefit_added += cycles;
        let e = self.subs[sub].slots[slot as usize].as_mut().unwrap();
        e.benefit = saturating_benefit(e.benefit, cycles);
    }

    /// Dispatch to the policy's access handler.
    pub fn on_access(&mut self, sub: usize, tag: u32, row_buffer_hit: bool, is_write: bool, trcd_saving: Cycle) -> AccessOutcome {
        match self.kind {
            PolicyKind::Sc => self.sc_on_access(sub, tag, row_buffer_hit, is_write),
            PolicyKind::Wmc => self.wmc_on_access(sub, tag, row_buffer_hit, is_write),
            PolicyKind::Bbc => self.bbc_on_access(sub, tag, row_buffer_hit, is_write, trcd_saving),
        }
    }
}

/// 8-bit saturating add.
pub fn saturating_benefit(b: u8, add: Cycle) -> u8 {
    (b as u64 + add).min(u8::MAX as u64) as u8
}

/// Whether an activation at `act` induced a wait: a request to a different
/// row of the same subarray arrived while the far segment would still have
/// been busy, i.e. in `[act, min(act + trc_far, until))`.
pub fn is_wait_inducing(act: Cycle, trc_far: Cycle, until: Cycle, row: (u32, u32), arrivals: &[(Cycle, u32, u32)]) -> bool {
    let end = (act + trc_far).min(until.max(act + 1));
    arrivals.iter().any(|&(t, s, r)| t >= act && t < end && s == row.0 && r != row.1)
}

/// Cycles a waiting request saved because the row was near: the shorter row
/// cycle, capped by how long the earliest waiter would actually have waited
/// for the far segment.
pub fn wait_saving(act: Cycle, trc_far: Cycle, trc_near: Cycle, until: Cycle, row: (u32, u32), arrivals: &[(Cycle, u32, u32)]) -> Cycle {
    let delta = trc_far.saturating_sub(trc_near);
    arrivals
        .iter()
        .filter(|&&(t, s, r)| t >= act && t < until.max(act + 1) && s == row.0 && r != row.1)
        .map(|&(t, _, _)| (act + trc_far).saturating_sub(t).min(delta))
        .max()
        .unwrap_or(0)
}

/// Physical placement of external rows within one subarray under exclusive
/// caching. The last physical row is the dummy used for swaps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExclusiveMap {
    phys_of: Vec<u32>,
    ext_of: Vec<Option<u32>>,
    dummy: u32,
}

impl ExclusiveMap {
    /// Identity placement over `rows` physical rows; `rows - 1` external rows
    /// are visible and the last physical row is the dummy.
    pub fn new(rows: u32) -> Result<Self> {
        if rows < 2 {
            return Err(Error::config("exclusive caching needs a dummy row"));
        }
        let mut ext_of: Vec<Option<u32>> = (0..rows).map(Some).collect();
        ext_of[rows as usize - 1] = None;
        Ok(ExclusiveMap { phys_of: (0..rows - 1).collect(), ext_of, dummy: rows - 1 })
    }

    pub fn visible_rows(&self) -> u32 {
        self.phys_of.len() as u32
    }

    pub fn phys(&self, ext: u32) -> u32 {
        self.phys_of[ext as usize]
    }

    pub fn ext(&self, phys: u32) -> Option<u32> {
        self.ext_of[phys as usize]
    }

    pub fn dummy(&self) -> u32 {
        self.dummy
    }
}

/// Exchange external rows `c` (far) and `e` (near) using the dummy row:
/// C->D, E->C, D->E. Returns the three (source, destination) physical row
/// copies; afterwards `c` lives where `e` was and vice versa.
pub fn exclusive_swap(map: &mut ExclusiveMap, c: u32, e: u32) -> Result<[(u32, u32); 3]> {
    let (pc, pe, d) = (map.phys(c), map.phys(e), map.dummy);
    if pc == d || pe == d {
        return Err(Error::config("dummy row cannot hold data"));
    }
    map.phys_of[c as usize] = pe;
    map.phys_of[e as usize] = pc;
    map.ext_of[pe as usize] = Some(c);
    map.ext_of[pc as usize] = Some(e);
    Ok([(pc, d), (pe, pc), (d, pe)])
}

/// Per subarray, the `near_rows` most accessed rows (ties to lower index),
/// returned in rank order.
pub fn build_profile_mapping(counts: &[Vec<u64>], near_rows: u32) -> Vec<Vec<u32>> {
    counts
        .iter()
        .map(|c| {
            let mut idx: Vec<u32> = (0..c.len() as u32).collect();
            idx.sort_by(|&a, &b| c[b as usize].cmp(&c[a as usize]).then(a.cmp(&b)));
            idx.truncate(near_rows as usize);
            idx
        })
        .collect()
}

/// Static placement from a profile: chosen rows take near slots in rank
/// order; the rest fill far rows in ascending order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProfileMapping {
    phys_of: Vec<Vec<u32>>,
}

impl ProfileMapping {
    pub fn new(selection: &[Vec<u32>], rows: u32) -> Self {
        let phys_of = selection
            .iter()
            .map(|near| {
                let mut p = vec![u32::MAX; rows as usize];
                for (k, &r) in near.iter().enumerate() {
                    p[r as usize] = k as u32;
                }
                let mut next = near.len() as u32;
                for slot in p.iter_mut().filter(|x| **x == u32::MAX) {
                    *slot = next;
                    next += 1;
                }
                p
            })
            .collect();
        ProfileMapping { phys_of }
    }

    pub fn phys(&self, sub: usize, row: u32) -> u32 {
        self.phys_of[sub][row as usize]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TagScheme {
    Sc,
    Wmc,
    Bbc,
    Exclusive,
}

/// Controller storage for near-segment tags plus replacement metadata.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TagStorage {
    pub tag_bits: u64,
    pub replacement_bits: u64,
}

impl TagStorage {
    pub fn total(&self) -> u64 {
        self.tag_bits + self.replacement_bits
    }
}

fn clog2(x: u64) -> u64 {
    assert!(x >= 1);
    64 - (x - 1).leading_zeros() as u64
}

/// Storage for `s` subarrays of `n` near and `f` far rows.
pub fn tag_storage_bits(n: u64, f: u64, s: u64, scheme: TagScheme) -> TagStorage {
    assert!(n >= 1 && f >= 1 && s >= 1);
    let inclusive = s * n * clog2(f);
    match scheme {
        TagScheme::Sc | TagScheme::Wmc => TagStorage { tag_bits: inclusive, replacement_bits: s * n * clog2(n) },
        TagScheme::Bbc => TagStorage { tag_bits: inclusive, replacement_bits: 8 * s * n },
        TagScheme::Exclusive => TagStorage { tag_bits: s * (n + f) * clog2(n + f), replacement_bits: 0 },
    }
}
