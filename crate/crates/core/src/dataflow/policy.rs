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

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use super::model::VertexId;
use super::tag::ScopeTag;

/// A schedulable node inside one scope instance: a plain vertex, or a nested
/// scope acting as a virtual vertex. `distance` is the topological distance
/// from the enclosing scope's ingress.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IntraNode {
    pub id: VertexId,
    pub distance: u32,
}

/// `Less` means the first argument runs first.
pub type InterSiFn = Arc<dyn Fn(&ScopeTag, &ScopeTag) -> Ordering + Send + Sync>;
pub type IntraSiFn = Arc<dyn Fn(IntraNode, IntraNode) -> Ordering + Send + Sync>;

#[derive(Clone)]
pub struct Policy {
    pub inter: InterSiFn,
    pub intra: IntraSiFn,
}

impl fmt::Debug for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Policy")
    }
}

/// Named scheduling policies. Built-ins: `fifo`, `bfs`, `dfs`.
#[derive(Clone, Debug)]
pub struct PolicyRegistry {
    map: BTreeMap<String, Policy>,
}

impl PolicyRegistry {
    pub fn with_builtins() -> PolicyRegistry {
        let mut r = PolicyRegistry { map: BTreeMap::new() };
        r.register("fifo", Policy { inter: Arc::new(|_, _| Ordering::Equal), intra: Arc::new(|_, _| Ordering::Equal) });
        r.register(
            "bfs",
            Policy { inter: Arc::new(|a, b| a.cmp(b)), intra: Arc::new(|a, b| a.distance.cmp(&b.distance)) },
        );
        r.register(
            "dfs",
            Policy { inter: Arc::new(|a, b| b.cmp(a)), intra: Arc::new(|a, b| b.distance.cmp(&a.distance)) },
        );
        r
    }

    pub fn register(&mut self, name: &str, p: Policy) {
        self.map.insert(name.to_string(), p);
    }

    pub fn get(&self, name: &str) -> Option<&Policy> {
        self.map.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(String::as_str)
    }
}

impl Default for PolicyRegistry {
    fn default() -> Self {
        PolicyRegistry::with_builtins()
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Checks the strict weak ordering axioms over every triple of `xs`.
    pub(crate) fn assert_strict_weak<T>(xs: &[T], cmp: impl Fn(&T, &T) -> Ordering) {
        let lt = |a: &T, b: &T| cmp(a, b) == Ordering::Less;
        let inc = |a: &T, b: &T| !lt(a, b) && !lt(b, a);
        for a in xs {
            assert!(!lt(a, a), "irreflexive");
            for b in xs {
                assert_eq!(cmp(a, b), cmp(b, a).reverse(), "antisymmetric");
                for c in xs {
                    if lt(a, b) && lt(b, c) {
                        assert!(lt(a, c), "transitive");
                    }
                    if inc(a, b) && inc(b, c) {
                        assert!(inc(a, c), "transitive incomparability");
                    }
                }
            }
        }
    }

    fn tags() -> impl Strategy<Value = Vec<ScopeTag>> {
        proptest::collection::vec(proptest::collection::vec(1u32..4, 0..4), 1..12)
            .prop_map(|v| v.into_iter().map(|e| ScopeTag::new(&e).unwrap()).collect())
    }

    fn nodes() -> impl Strategy<Value = Vec<IntraNode>> {
        proptest::collection::vec((0u32..10, 0u32..5), 1..12)
            .prop_map(|v| v.into_iter().map(|(id, distance)| IntraNode { id, distance }).collect())
    }

    proptest! {
        #[test]
        fn builtin_comparators_are_strict_weak(ts in tags(), ns in nodes()) {
            let reg = PolicyRegistry::with_builtins();
            for name in ["fifo", "bfs", "dfs"] {
                let p = reg.get(name).unwrap();
                assert_strict_weak(&ts, |a, b| (p.inter)(a, b));
                assert_strict_weak(&ns, |a, b| (p.intra)(*a, *b));
            }
        }
    }

    #[test]
    fn bfs_is_lexical() {
        let reg = PolicyRegistry::with_builtins();
        let bfs = reg.get("bfs").unwrap();
        let a = ScopeTag::new(&[1]).unwrap();
        let b = ScopeTag::new(&[2]).unwrap();
        assert_eq!((bfs.inter)(&a, &b), Ordering::Less);
        assert_eq!((reg.get("dfs").unwrap().inter)(&a, &b), Ordering::Greater);
    }
}
