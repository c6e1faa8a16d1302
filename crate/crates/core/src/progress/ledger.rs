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
pub enum EosAction {
    None,
    /// All input seen; the operator has no outgoing edges.
    FireCompletion,
    /// All input seen; run OnCompletion, then send EOS on every outgoing edge.
    FireAndPropagate,
}

/// Per (operator, tag) record of EOS weight received on each incoming edge.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EosLedger {
    expected: SmallVec<[(EdgeId, u32); 2]>,
    got: SmallVec<[u32; 2]>,
    has_outputs: bool,
    fired: bool,
}

impl EosLedger {
    /// `expected` lists each incoming edge with the total EOS weight it must
    /// deliver (normally the number of upstream operators).
    pub fn new(expected: &[(EdgeId, u32)], has_outputs: bool) -> EosLedger {
        EosLedger {
            expected: expected.iter().copied().collect(),
            got: SmallVec::from_elem(0, expected.len()),
            has_outputs,
            fired: false,
        }
    }

    pub fn on_eos(&mut self, edge: EdgeId, weight: u32) -> Result<EosAction, ProgressError> {
        let i = self.expected.iter().position(|(e, _)| *e == edge).ok_or(ProgressError::UnknownEdge(edge))?;
        let want = self.expected[i].1;
        let got = self.got[i] + weight;
        if got > want || self.fired {
            return Err(ProgressError::DuplicateEos { edge, got, expected: want });
        }
        self.got[i] = got;
        if self.is_complete() {
            self.fired = true;
            return Ok(if self.has_outputs { EosAction::FireAndPropagate } else { EosAction::FireCompletion });
        }
        Ok(EosAction::None)
    }

    pub fn is_complete(&self) -> bool {
        self.expected.iter().zip(&self.got).all(|((_, w), g)| g == w)
    }

    pub fn fired(&self) -> bool {
        self.fired
    }

    pub fn received(&self, edge: EdgeId) -> u32 {
        self.expected.iter().position(|(e, _)| *e == edge).map(|i| self.got[i]).unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fires_after_all_edges() {
        let mut l = EosLedger::new(&[(3, 1), (4, 1)], true);
        assert_eq!(l.on_eos(3, 1), Ok(EosAction::None));
        assert_eq!(l.on_eos(4, 1), Ok(EosAction::FireAndPropagate));
        assert!(l.fired());
    }

    #[test]
    fn weights_accumulate() {
        let mut l = EosLedger::new(&[(0, 4)], false);
        assert_eq!(l.on_eos(0, 1), Ok(EosAction::None));
        assert_eq!(l.on_eos(0, 3), Ok(EosAction::FireCompletion));
    }

    #[test]
    fn duplicate_is_a_fault() {
        let mut l = EosLedger::new(&[(0, 1), (1, 1)], true);
        l.on_eos(0, 1).unwrap();
        assert!(matches!(l.on_eos(0, 1), Err(ProgressError::DuplicateEos { .. })));
        assert_eq!(l.on_eos(9, 1), Err(ProgressError::UnknownEdge(9)));
    }
}
