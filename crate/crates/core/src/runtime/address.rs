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

use std::fmt;
use std::ops::Bound;

use smallvec::SmallVec;

use crate::dataflow::{ScopeId, ScopeTag, Topology, VertexId};

pub type Chain = SmallVec<[(ScopeId, u32); 4]>;

/// Where an operator lives inside its executor's operator tree: the chain of
/// (scope, instance ordinal) pairs from the root, then the vertex and the
/// operator's partition. Sorting keeps each instance's operators contiguous,
/// so a prefix range is exactly the subtree of one scope instance.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OpAddr {
    pub chain: Chain,
    pub vertex: VertexId,
    pub part: u32,
}

impl OpAddr {
    /// Address of operator `part` of `v` for tag `tag`.
    pub fn new(topo: &Topology, v: VertexId, part: u32, tag: &ScopeTag) -> OpAddr {
        let scopes = topo.chain(v);
        assert_eq!(scopes.len(), tag.depth(), "tag {tag} does not fit vertex {v}");
        OpAddr { chain: scopes.iter().copied().zip(tag.elements().iter().copied()).collect(), vertex: v, part }
    }

    pub fn tag(&self) -> ScopeTag {
        let e: SmallVec<[u32; 4]> = self.chain.iter().map(|(_, o)| *o).collect();
        ScopeTag::new(&e).expect("address chains hold valid ordinals")
    }

    /// True when this operator lives inside instance `prefix`.
    pub fn within(&self, prefix: &[(ScopeId, u32)]) -> bool {
        self.chain.len() >= prefix.len() && self.chain[..prefix.len()] == *prefix
    }
}

impl fmt::Display for OpAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (s, o) in &self.chain {
            write!(f, "s{s}.{o}/")?;
        }
        write!(f, "v{}#{}", self.vertex, self.part)
    }
}

/// Range bounds covering every address inside instance `prefix`.
pub fn subtree_start(prefix: &[(ScopeId, u32)]) -> Bound<OpAddr> {
    Bound::Included(OpAddr { chain: prefix.iter().copied().collect(), vertex: 0, part: 0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataflow::validate::tests::loop_fixture;
    use std::collections::BTreeMap;

    #[test]
    fn projection_equals_tag() {
        let df = loop_fixture();
        let topo = Topology::build(&df).unwrap();
        let tag = ScopeTag::new(&[4]).unwrap();
        let a = OpAddr::new(&topo, 2, 0, &tag);
        assert_eq!(a.tag(), tag);
        assert_eq!(a.to_string(), "s0.4/v2#0");
    }

    #[test]
    fn subtree_is_contiguous() {
        let df = loop_fixture();
        let topo = Topology::build(&df).unwrap();
        let mut m = BTreeMap::new();
        for o in 1..=3u32 {
            for v in [2, 3] {
                m.insert(OpAddr::new(&topo, v, 0, &ScopeTag::new(&[o]).unwrap()), ());
            }
        }
        m.insert(OpAddr::new(&topo, 5, 0, &ScopeTag::root()), ());
        let prefix = [(0, 2)];
        let inside: Vec<_> = m
            .range((subtree_start(&prefix), Bound::Unbounded))
            .take_while(|(a, _)| a.within(&prefix))
            .map(|(a, _)| a.vertex)
            .collect();
        assert_eq!(inside, vec![2, 3]);
    }
}
