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

use std::collections::BTreeSet;

use super::ProgressError;
use crate::dataflow::{BranchAllocator, ScopeId};

/// Sent by a branch-scope ingress operator once it has routed all input of
/// one parent instance: it instantiated `count` ordinals from its stride.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SiCountReport {
    pub ingress: u32,
    pub scope: ScopeId,
    pub count: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScopeDecision {
    Pending,
    Complete,
}

/// Egress-side accounting for the instances of one branch scope under one
/// parent instance. An egress operator is responsible for the ordinals that
/// `owns` accepts (instances are hashed over the egress operators).
#[derive(Clone, Debug)]
pub struct BranchEgressProgress {
    ingress_parts: u32,
    reported: BTreeSet<u32>,
    expected: BTreeSet<u32>,
    completed: BTreeSet<u32>,
}

impl BranchEgressProgress {
    pub fn new(ingress_parts: u32) -> BranchEgressProgress {
        BranchEgressProgress {
            ingress_parts,
            reported: BTreeSet::new(),
            expected: BTreeSet::new(),
            completed: BTreeSet::new(),
        }
    }

    pub fn on_report(&mut self, r: SiCountReport, owns: impl Fn(u32) -> bool) -> Result<ScopeDecision, ProgressError> {
        if r.ingress >= self.ingress_parts {
            return Err(ProgressError::UnknownIngress { index: r.ingress, parts: self.ingress_parts });
        }
        if !self.reported.insert(r.ingress) {
            return Err(ProgressError::DuplicateReport(r.ingress));
        }
        self.expected.extend(BranchAllocator::ordinals(r.ingress, self.ingress_parts, r.count).filter(|o| owns(*o)));
        Ok(self.decision())
    }

    /// Records ordinal `si` as completed (by EOS or by termination).
    /// Returns false when it was already recorded.
    pub fn on_si_complete(&mut self, si: u32) -> bool {
        self.completed.insert(si)
    }

    pub fn is_completed(&self, si: u32) -> bool {
        self.completed.contains(&si)
    }

    pub fn expected(&self) -> &BTreeSet<u32> {
        &self.expected
    }

    pub fn decision(&self) -> ScopeDecision {
        if self.reported.len() as u32 == self.ingress_parts && self.expected.is_subset(&self.completed) {
            ScopeDecision::Complete
        } else {
            ScopeDecision::Pending
        }
    }
}

/// Stateless form: decides completion from the full report set.
pub fn branch_scope_progress(
    ingress_parts: u32,
    reports: &[SiCountReport],
    completed: &BTreeSet<u32>,
) -> Result<(ScopeDecision, BTreeSet<u32>), ProgressError> {
    let mut p = BranchEgressProgress::new(ingress_parts);
    for s in completed {
        p.on_si_complete(*s);
    }
    for r in reports {
        p.on_report(*r, |_| true)?;
    }
    Ok((p.decision(), p.expected.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(ingress: u32, count: u32) -> SiCountReport {
        SiCountReport { ingress, scope: 0, count }
    }

    #[test]
    fn single_ingress_all_complete() {
        let done: BTreeSet<u32> = [1, 2, 3].into();
        let (d, exp) = branch_scope_progress(1, &[report(0, 3)], &done).unwrap();
        assert_eq!(d, ScopeDecision::Complete);
        assert_eq!(exp, done);
    }

    #[test]
    fn termination_counts_as_completion() {
        let mut p = BranchEgressProgress::new(1);
        p.on_si_complete(1);
        p.on_si_complete(3);
        assert_eq!(p.on_report(report(0, 3), |_| true).unwrap(), ScopeDecision::Pending);
        // SI 2 terminated early.
        p.on_si_complete(2);
        assert_eq!(p.decision(), ScopeDecision::Complete);
    }

    #[test]
    fn strided_union_of_two_ingresses() {
        // Oracle: a global recount by replaying both allocators.
        let mut a = BranchAllocator::new(0, 2);
        let mut b = BranchAllocator::new(1, 2);
        let mut recount: BTreeSet<u32> = (0..3).map(|_| a.next_ordinal()).collect();
        recount.insert(b.next_ordinal());
        let (d, exp) = branch_scope_progress(2, &[report(0, 3), report(1, 1)], &BTreeSet::new()).unwrap();
        assert_eq!(d, ScopeDecision::Pending);
        assert_eq!(exp, recount);
        assert_eq!(exp, BTreeSet::from([1, 2, 3, 5]));
    }

    #[test]
    fn egress_partition_filters_owned() {
        let mut p = BranchEgressProgress::new(2);
        p.on_report(report(0, 3), |o| o % 2 == 1).unwrap();
        p.on_report(report(1, 1), |o| o % 2 == 1).unwrap();
        assert_eq!(p.expected(), &BTreeSet::from([1, 3, 5]));
    }

    #[test]
    fn unknown_ingress_is_a_fault() {
        let mut p = BranchEgressProgress::new(2);
        assert!(matches!(p.on_report(report(2, 1), |_| true), Err(ProgressError::UnknownIngress { .. })));
        p.on_report(report(0, 1), |_| true).unwrap();
        assert_eq!(p.on_report(report(0, 1), |_| true), Err(ProgressError::DuplicateReport(0)));
    }
}
