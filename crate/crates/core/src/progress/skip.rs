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

use smallvec::SmallVec;

use super::ProgressError;
use crate::dataflow::EdgeId;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SkipOutcome {
    /// Recorded; some incoming edge is still open.
    Buffered,
    /// The child exists; the EOS belongs in its mailbox.
    Enqueued,
    /// Every incoming edge is closed: the executor emits EOS with this weight
    /// on behalf of the operators that were never created.
    EmittedOnBehalf { weight: u32 },
}

/// EOS bookkeeping for the not-yet-created operators of one (vertex, tag) on
/// one executor. EOS messages reach every local operator of the vertex, so a
/// single tracker speaks for all local operators that do not exist.
#[derive(Clone, Debug)]
pub struct SkipTracker {
    expected: SmallVec<[(EdgeId, u32); 2]>,
    got: SmallVec<[u32; 2]>,
    buffered: SmallVec<[(EdgeId, u32); 2]>,
    local_parts: u32,
    created: u32,
}

impl SkipTracker {
    pub fn new(expected: &[(EdgeId, u32)], local_parts: u32) -> SkipTracker {
        SkipTracker {
            expected: expected.iter().copied().collect(),
            got: SmallVec::from_elem(0, expected.len()),
            buffered: SmallVec::new(),
            local_parts,
            created: 0,
        }
    }

    pub fn on_eos(&mut self, edge: EdgeId, weight: u32) -> Result<SkipOutcome, ProgressError> {
        let i = self.expected.iter().position(|(e, _)| *e == edge).ok_or(ProgressError::UnknownEdge(edge))?;
        self.got[i] += weight;
        if self.got[i] > self.expected[i].1 {
            return Err(ProgressError::DuplicateEos { edge, got: self.got[i], expected: self.expected[i].1 });
        }
        self.buffered.push((edge, weight));
        if self.is_full() {
            Ok(SkipOutcome::EmittedOnBehalf { weight: self.local_parts - self.created })
        } else {
            Ok(SkipOutcome::Buffered)
        }
    }

    pub fn is_full(&self) -> bool {
        self.expected.iter().zip(&self.got).all(|((_, w), g)| g == w)
    }

    /// A local operator was created by DATA: returns the EOS it must see
    /// after that DATA.
    pub fn on_create(&mut self) -> Vec<(EdgeId, u32)> {
        self.created += 1;
        self.buffered.to_vec()
    }

    pub fn created(&self) -> u32 {
        self.created
    }
}

/// One EOS for a (vertex, tag) on an executor, given whether the
/// destination operator exists.
pub fn eos_skip(tracker: &mut SkipTracker, child_exists: bool, edge: EdgeId, weight: u32) -> Result<SkipOutcome, ProgressError> {
    if child_exists {
        return Ok(SkipOutcome::Enqueued);
    }
    tracker.on_eos(edge, weight)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_edge_child_is_never_created() {
        let mut t = SkipTracker::new(&[(0, 1)], 1);
        assert_eq!(eos_skip(&mut t, false, 0, 1), Ok(SkipOutcome::EmittedOnBehalf { weight: 1 }));
        assert_eq!(t.created(), 0);
    }

    #[test]
    fn buffered_eos_follows_creation() {
        let mut t = SkipTracker::new(&[(0, 1), (1, 1)], 1);
        assert_eq!(eos_skip(&mut t, false, 0, 1), Ok(SkipOutcome::Buffered));
        assert_eq!(t.on_create(), vec![(0, 1)]);
        assert_eq!(eos_skip(&mut t, true, 1, 1), Ok(SkipOutcome::Enqueued));
    }

    #[test]
    fn on_behalf_weight_excludes_created() {
        let mut t = SkipTracker::new(&[(0, 2)], 4);
        t.on_eos(0, 1).unwrap();
        t.on_create();
        assert_eq!(t.on_eos(0, 1), Ok(SkipOutcome::EmittedOnBehalf { weight: 3 }));
    }
}
