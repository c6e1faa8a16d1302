// Copyright 2026 The Scopeflow Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Load measurement per executor and tablet migration.
//!
//! Migration only changes tablet ownership in a newly published routing
//! snapshot. Running queries keep the snapshot they were planned with, so
//! their operators stay where they are; queries planned afterwards follow
//! the new owners.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::graph::{ExecId, RoutingHandle, RoutingTable, TabletId};
use crate::runtime::LoadCounters;

/// Window length, in quanta.
pub const DEFAULT_WINDOW: u64 = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Move {
    pub tablet: TabletId,
    pub from: ExecId,
    pub to: ExecId,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExecLoad {
    pub exec: ExecId,
    /// Movable load: messages processed by graph-accessing operators.
    pub load: f64,
    /// All messages processed in the window.
    pub processed: u64,
    pub backlog: u64,
    pub tablets: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabletLoad {
    pub tablet: TabletId,
    pub owner: ExecId,
    pub load: f64,
    /// Fraction of the owner's movable load.
    pub share: f64,
}

/// Per-window load snapshot, taken between quanta.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LoadVector {
    pub window: u64,
    pub routing_version: u64,
    pub execs: Vec<ExecLoad>,
    pub tablets: Vec<TabletLoad>,
}

impl LoadVector {
    /// Builds a vector from explicit per-tablet loads; an executor's load is
    /// the sum over the tablets it owns.
    pub fn from_tablets(routing: &RoutingTable, tablet_load: &[f64]) -> LoadVector {
        let n = routing.num_executors as usize;
        let mut execs: Vec<ExecLoad> =
            (0..n).map(|e| ExecLoad { exec: e as ExecId, load: 0.0, processed: 0, backlog: 0, tablets: 0 }).collect();
        for (t, w) in tablet_load.iter().enumerate() {
            let e = &mut execs[routing.owner(t as TabletId) as usize];
            e.load += w;
            e.processed += *w as u64;
            e.tablets += 1;
        }
        let mut lv = LoadVector { window: 0, routing_version: routing.version, execs, tablets: Vec::new() };
        lv.tablets = tablet_load
            .iter()
            .enumerate()
            .map(|(t, w)| TabletLoad { tablet: t as TabletId, owner: routing.owner(t as TabletId), load: *w, share: 0.0 })
            .collect();
        lv.fill_shares();
        lv
    }

    /// Load over the window between two counter snapshots (one per executor).
    pub fn between(routing: &RoutingTable, before: &[LoadCounters], after: &[LoadCounters], window: u64) -> LoadVector {
        let mut tablet_load = vec![0.0; routing.num_tablets()];
        for (i, a) in after.iter().enumerate() {
            let b = before.get(i);
            for (t, n) in &a.per_tablet {
                let prev = b.and_then(|b| b.per_tablet.get(t)).copied().unwrap_or(0);
                if let Some(slot) = tablet_load.get_mut(*t as usize) {
                    *slot += n.saturating_sub(prev) as f64;
                }
            }
        }
        let mut lv = LoadVector::from_tablets(routing, &tablet_load);
        lv.window = window;
        for (i, a) in after.iter().enumerate() {
            if let Some(e) = lv.execs.get_mut(i) {
                e.processed = a.processed - before.get(i).map_or(0, |b| b.processed);
                e.backlog = a.backlog;
            }
        }
        lv
    }

    /// Exponential smoothing: `alpha` of the previous window, the rest from this one.
    pub fn decayed(&self, prev: &LoadVector, alpha: f64) -> LoadVector {
        let mut lv = self.clone();
        let old: BTreeMap<TabletId, f64> = prev.tablets.iter().map(|t| (t.tablet, t.load)).collect();
        for e in &mut lv.execs {
            e.load = 0.0;
        }
        for t in &mut lv.tablets {
            t.load = alpha * old.get(&t.tablet).copied().unwrap_or(0.0) + (1.0 - alpha) * t.load;
            lv.execs[t.owner as usize].load += t.load;
        }
        lv.fill_shares();
        lv
    }

    fn fill_shares(&mut self) {
        for t in &mut self.tablets {
            let total = self.execs[t.owner as usize].load;
            t.share = if total > 0.0 { t.load / total } else { 0.0 };
        }
    }

    /// Largest over smallest executor load.
    pub fn imbalance(&self) -> f64 {
        let loads = self.execs.iter().map(|e| e.load);
        let max = loads.clone().fold(f64::MIN, f64::max);
        let min = loads.fold(f64::MAX, f64::min);
        if max <= 0.0 {
            1.0
        } else if min <= 0.0 {
            f64::INFINITY
        } else {
            max / min
        }
    }

    /// Structured text dump of the window.
    pub fn report(&self) -> String {
        toml::to_string(self).expect("load vector serializes")
    }
}

/// Greedy rebalancing plan: while the largest/smallest executor load ratio
/// exceeds `threshold`, move the heaviest tablet of the most loaded
/// executor that still narrows the gap to the least loaded one.
pub fn plan_migration(lv: &LoadVector, threshold: f64) -> Vec<Move> {
    plan_migration_except(lv, threshold, &BTreeSet::new())
}

/// As [`plan_migration`], never moving a tablet in `frozen`.
pub fn plan_migration_except(lv: &LoadVector, threshold: f64, frozen: &BTreeSet<TabletId>) -> Vec<Move> {
    let n = lv.execs.len();
    if n < 2 {
        return Vec::new();
    }
    let mut load: Vec<f64> = lv.execs.iter().map(|e| e.load).collect();
    let mut owned: Vec<Vec<(TabletId, f64)>> = vec![Vec::new(); n];
    for t in &lv.tablets {
        owned[t.owner as usize].push((t.tablet, t.load));
    }
    let mut moved = BTreeSet::new();
    let mut plan = Vec::new();
    while plan.len() < lv.tablets.len() {
        // Lowest id wins ties, so the plan is deterministic.
        let hi = (0..n).fold(0, |b, e| if load[e] > load[b] { e } else { b });
        let lo = (0..n).fold(0, |b, e| if load[e] < load[b] { e } else { b });
        if hi == lo || load[hi] <= 0.0 {
            break;
        }
        if load[lo] > 0.0 && load[hi] / load[lo] <= threshold {
            break;
        }
        let gap = load[hi] - load[lo];
        let pick = owned[hi]
            .iter()
            .enumerate()
            .filter(|(_, (t, w))| *w > 0.0 && *w < gap && !frozen.contains(t) && !moved.contains(t))
            .fold(None::<(usize, f64)>, |b, (i, (_, w))| match b {
                Some((_, bw)) if bw >= *w => b,
                _ => Some((i, *w)),
            });
        let Some((i, w)) = pick else { break };
        let (t, _) = owned[hi].remove(i);
        owned[lo].push((t, w));
        load[hi] -= w;
        load[lo] += w;
        moved.insert(t);
        plan.push(Move { tablet: t, from: hi as ExecId, to: lo as ExecId });
    }
    plan
}

/// Publishes a snapshot with `mv` applied, retrying against fresh snapshots
/// when another publication wins the race. Moving a tablet to its current
/// owner publishes nothing and returns the current snapshot.
pub fn apply_migration(handle: &RoutingHandle, mv: Move) -> Arc<RoutingTable> {
    loop {
        let cur = handle.snapshot();
        if cur.owner(mv.tablet) == mv.to {
            return cur;
        }
        match handle.compare_and_publish(cur.version, cur.with_move(mv.tablet, mv.to)) {
            Ok(next) => return next,
            Err(_) => continue,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BalanceConfig {
    pub window: u64,
    pub threshold: f64,
    /// Weight of the previous window in the load estimate.
    pub decay: f64,
    /// Windows a migrated tablet stays put.
    pub cooldown: u64,
}

impl Default for BalanceConfig {
    fn default() -> BalanceConfig {
        BalanceConfig { window: DEFAULT_WINDOW, threshold: 1.2, decay: 0.0, cooldown: 1 }
    }
}

/// Periodic load balancing driven from between quanta.
#[derive(Debug)]
pub struct Balancer {
    pub cfg: BalanceConfig,
    windows: u64,
    before: Vec<LoadCounters>,
    last: Option<LoadVector>,
    moved_at: BTreeMap<TabletId, u64>,
}

impl Balancer {
    pub fn new(cfg: BalanceConfig) -> Balancer {
        Balancer { cfg, windows: 0, before: Vec::new(), last: None, moved_at: BTreeMap::new() }
    }

    /// Closes a window: measures it, plans, and publishes the moves.
    pub fn on_window(&mut self, routing: &RoutingHandle, loads: &[LoadCounters]) -> (LoadVector, Vec<Move>) {
        let snap = routing.snapshot();
        let mut lv = LoadVector::between(&snap, &self.before, loads, self.windows);
        if let (Some(prev), true) = (&self.last, self.cfg.decay > 0.0) {
            lv = lv.decayed(prev, self.cfg.decay);
        }
        let w = self.windows;
        let frozen: BTreeSet<TabletId> =
            self.moved_at.iter().filter(|(_, at)| w < **at + 1 + self.cfg.cooldown).map(|(t, _)| *t).collect();
        let plan = plan_migration_except(&lv, self.cfg.threshold, &frozen);
        for m in &plan {
            apply_migration(routing, *m);
            self.moved_at.insert(m.tablet, w);
        }
        self.before = loads.to_vec();
        self.last = Some(lv.clone());
        self.windows += 1;
        (lv, plan)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn greedy_moves_one_heavy_tablet() {
        let rt = RoutingTable::from_owners(vec![0, 0, 0, 1], 2);
        let lv = LoadVector::from_tablets(&rt, &[30.0, 30.0, 30.0, 10.0]);
        let plan = plan_migration(&lv, 1.2);
        assert_eq!(plan, vec![Move { tablet: 0, from: 0, to: 1 }]);
        let after = rt.with_move(0, 1);
        let lv2 = LoadVector::from_tablets(&after, &[30.0, 30.0, 30.0, 10.0]);
        assert_eq!(lv2.execs.iter().map(|e| e.load).collect::<Vec<_>>(), vec![60.0, 40.0]);
    }

    #[test]
    fn balanced_or_single_executor_plans_nothing() {
        let rt = RoutingTable::round_robin(4, 2);
        assert!(plan_migration(&LoadVector::from_tablets(&rt, &[5.0; 4]), 1.2).is_empty());
        let one = RoutingTable::round_robin(4, 1);
        assert!(plan_migration(&LoadVector::from_tablets(&one, &[1.0, 9.0, 3.0, 0.0]), 1.0).is_empty());
    }

    #[test]
    fn skewed_uniform_tablets_end_even() {
        let owners: Vec<ExecId> = (0..64).map(|t| if t < 48 { t / 12 } else { 4 + (t - 48) / 4 }).collect();
        let rt = RoutingTable::from_owners(owners, 8);
        let plan = plan_migration(&LoadVector::from_tablets(&rt, &[1.0; 64]), 1.2);
        let mut next = rt.clone();
        for m in &plan {
            next = next.with_move(m.tablet, m.to);
        }
        assert!((0..8).all(|e| next.tablets_of(e).len() == 8), "{:?}", next.owners());
    }

    #[test]
    fn self_move_is_a_no_op() {
        let h = RoutingHandle::new(RoutingTable::round_robin(4, 2));
        let s = apply_migration(&h, Move { tablet: 1, from: 1, to: 1 });
        assert_eq!(s.version, 0);
        let a = apply_migration(&h, Move { tablet: 0, from: 0, to: 1 });
        let b = apply_migration(&h, Move { tablet: 3, from: 1, to: 0 });
        assert_eq!((a.version, b.version), (1, 2));
        assert_eq!(h.snapshot().owners(), &[1, 1, 0, 0]);
    }

    #[test]
    fn concurrent_publications_all_land() {
        let h = Arc::new(RoutingHandle::new(RoutingTable::round_robin(16, 4)));
        let threads: Vec<_> = (0..4u32)
            .map(|i| {
                let h = h.clone();
                std::thread::spawn(move || {
                    for t in (0..16).filter(|t| t % 4 == i) {
                        apply_migration(&h, Move { tablet: t, from: i, to: (i + 1) % 4 });
                    }
                })
            })
            .collect();
        for t in threads {
            t.join().unwrap();
        }
        let s = h.snapshot();
        assert_eq!(s.version, 16);
        assert!((0..16).all(|t| s.owner(t) == (t + 1) % 4));
    }

    #[test]
    fn cooldown_freezes_moved_tablets_for_a_window() {
        let h = RoutingHandle::new(RoutingTable::from_owners(vec![0, 0, 0, 1], 2));
        let mut b = Balancer::new(BalanceConfig { threshold: 1.0, ..BalanceConfig::default() });
        let load = |ts: &[(TabletId, u64)]| LoadCounters {
            processed: 0,
            per_tablet: ts.iter().copied().collect(),
            backlog: 0,
        };
        let w1 = vec![load(&[(0, 30), (1, 30), (2, 30)]), load(&[(3, 10)])];
        let (_, p1) = b.on_window(&h, &w1);
        assert_eq!(p1.len(), 1);
        let moved = p1[0].tablet;
        // Same skew seen again: the moved tablet may not bounce back.
        let mut w2 = w1.clone();
        for c in &mut w2 {
            for v in c.per_tablet.values_mut() {
                *v *= 2;
            }
        }
        w2[0].per_tablet.insert(moved, 60);
        let (lv2, p2) = b.on_window(&h, &w2);
        assert!(p2.iter().all(|m| m.tablet != moved), "{p2:?}");
        assert!(lv2.report().contains("routing_version = 1"));
    }
}
