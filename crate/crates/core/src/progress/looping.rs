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

use std::collections::{BTreeMap, BTreeSet};

use super::ProgressError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IterationOutcome {
    /// Iteration `k` received `total` messages; it exists and must be closed.
    Live { k: u32, total: u64 },
    /// Iteration `k` received nothing: the loop ran `k - 1` iterations.
    Empty { k: u32 },
}

/// Collects, per iteration, the number of messages each of the `parts`
/// ingress operators routed into it.
#[derive(Clone, Debug)]
pub struct IterationReports {
    parts: u32,
    pending: BTreeMap<u32, (BTreeSet<u32>, u64)>,
    end: Option<u32>,
}

impl IterationReports {
    pub fn new(parts: u32) -> IterationReports {
        IterationReports { parts, pending: BTreeMap::new(), end: None }
    }

    pub fn on_report(&mut self, k: u32, from: u32, count: u64) -> Result<Option<IterationOutcome>, ProgressError> {
        if from >= self.parts {
            return Err(ProgressError::UnknownIngress { index: from, parts: self.parts });
        }
        let entry = self.pending.entry(k).or_default();
        if !entry.0.insert(from) {
            return Err(ProgressError::DuplicateReport(from));
        }
        entry.1 += count;
        if entry.0.len() as u32 != self.parts {
            return Ok(None);
        }
        let total = entry.1;
        self.pending.remove(&k);
        if total == 0 {
            self.end = Some(self.end.map_or(k, |e| e.min(k)));
            Ok(Some(IterationOutcome::Empty { k }))
        } else {
            Ok(Some(IterationOutcome::Live { k, total }))
        }
    }

    /// Number of iterations, once the first empty one is known.
    pub fn iterations(&self) -> Option<u32> {
        self.end.map(|k| k - 1)
    }
}

/// Egress-side accounting of one loop instance.
#[derive(Clone, Debug)]
pub struct LoopEgressProgress {
    reports: IterationReports,
    completed: BTreeSet<u32>,
}

impl LoopEgressProgress {
    pub fn new(ingress_parts: u32) -> LoopEgressProgress {
        LoopEgressProgress { reports: IterationReports::new(ingress_parts), completed: BTreeSet::new() }
    }

    pub fn on_report(&mut self, k: u32, from: u32, count: u64) -> Result<Option<IterationOutcome>, ProgressError> {
        self.reports.on_report(k, from, count)
    }

    pub fn on_iteration_complete(&mut self, k: u32) -> bool {
        self.completed.insert(k)
    }

    pub fn iterations(&self) -> Option<u32> {
        self.reports.iterations()
    }

    /// Complete once the iteration count is known and every iteration this
    /// egress operator is responsible for (per `owns`) has completed.
    pub fn is_complete(&self, owns: impl Fn(u32) -> bool) -> bool {
        match self.reports.iterations() {
            Some(n) => (1..=n).filter(|k| owns(*k)).all(|k| self.completed.contains(&k)),
            None => false,
        }
    }
}

/// Stateless form over the per-iteration totals of all ingress operators:
/// returns the detected iteration count and whether the scope completed.
pub fn loop_scope_progress(per_iteration_totals: &[u64], completed: &BTreeSet<u32>) -> (Option<u32>, bool) {
    let mut p = LoopEgressProgress::new(1);
    for (i, t) in per_iteration_totals.iter().enumerate() {
        p.on_report(i as u32 + 1, 0, *t).expect("single ingress");
        if *t == 0 {
            break;
        }
    }
    for k in completed {
        p.on_iteration_complete(*k);
    }
    (p.iterations(), p.is_complete(|_| true))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Hand simulation of `times(3)` on a path graph: one traverser enters,
    /// continues twice and exits at iteration 3.
    #[test]
    fn times_three_detects_three_iterations() {
        let mut backward = [0u64; 5];
        let mut entered = vec![1u64];
        for k in 1..=4 {
            let n = entered[k - 1];
            let cont = if k < 3 { n } else { 0 };
            backward[k] = cont;
            entered.push(cont);
        }
        let (n, done) = loop_scope_progress(&entered, &BTreeSet::from([1, 2, 3]));
        assert_eq!(n, Some(3));
        assert!(done);
        let (_, done) = loop_scope_progress(&entered, &BTreeSet::from([1, 2]));
        assert!(!done);
    }

    #[test]
    fn immediately_empty_body() {
        let (n, done) = loop_scope_progress(&[1, 0], &BTreeSet::from([1]));
        assert_eq!((n, done), (Some(1), true));
        assert_eq!(loop_scope_progress(&[0], &BTreeSet::new()), (Some(0), true));
    }

    #[test]
    fn parallel_reports_sum() {
        let mut r = IterationReports::new(2);
        assert_eq!(r.on_report(2, 0, 0).unwrap(), None);
        assert_eq!(r.on_report(2, 1, 3).unwrap(), Some(IterationOutcome::Live { k: 2, total: 3 }));
        r.on_report(3, 1, 0).unwrap();
        assert_eq!(r.on_report(3, 0, 0).unwrap(), Some(IterationOutcome::Empty { k: 3 }));
        assert_eq!(r.iterations(), Some(2));
        assert!(r.on_report(4, 5, 0).is_err());
    }

    #[test]
    fn egress_waits_for_owned_iterations() {
        let mut p = LoopEgressProgress::new(1);
        p.on_report(1, 0, 2).unwrap();
        p.on_report(2, 0, 1).unwrap();
        p.on_report(3, 0, 0).unwrap();
        p.on_iteration_complete(2);
        assert!(p.is_complete(|k| k % 2 == 0));
        assert!(!p.is_complete(|_| true));
    }
}
