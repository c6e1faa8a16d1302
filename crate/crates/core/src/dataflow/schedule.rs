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

use super::model::{LogicalDataflow, ScopeId, VertexId};
use super::policy::{InterSiFn, IntraNode, IntraSiFn, PolicyRegistry};
use super::tag::ScopeTag;
use super::validate::Topology;
use super::ModelError;

/// Scheduling priorities of one dataflow with its policies resolved.
#[derive(Clone)]
pub struct Scheduler {
    topo: Topology,
    root_intra: IntraSiFn,
    inter: Vec<InterSiFn>,
    intra: Vec<IntraSiFn>,
    ingress: Vec<VertexId>,
}

impl std::fmt::Debug for Scheduler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Scheduler").field("scopes", &self.inter.len()).finish()
    }
}

impl Scheduler {
    pub fn new(df: &LogicalDataflow, topo: &Topology, reg: &PolicyRegistry) -> Result<Scheduler, ModelError> {
        let get = |n: &str| reg.get(n).ok_or_else(|| ModelError::UnknownPolicy(n.to_string()));
        let root_intra = get(&df.root_intra_policy)?.intra.clone();
        let mut inter = Vec::new();
        let mut intra = Vec::new();
        for s in &df.scopes {
            inter.push(get(&s.inter_si_policy)?.inter.clone());
            intra.push(get(&s.intra_si_policy)?.intra.clone());
        }
        let ingress = df.scopes.iter().map(|s| s.ingress).collect();
        Ok(Scheduler { topo: topo.clone(), root_intra, inter, intra, ingress })
    }

    pub fn topology(&self) -> &Topology {
        &self.topo
    }

    fn plain(&self, v: VertexId) -> IntraNode {
        IntraNode { id: v, distance: self.topo.distance[v as usize] }
    }

    /// A nested scope seen from its parent instance.
    fn virtual_node(&self, s: ScopeId) -> IntraNode {
        let ing = self.ingress[s as usize];
        IntraNode { id: ing, distance: self.topo.distance[ing as usize] + 1 }
    }

    fn intra_of(&self, parent: Option<ScopeId>) -> &IntraSiFn {
        match parent {
            None => &self.root_intra,
            Some(s) => &self.intra[s as usize],
        }
    }

    /// `Less` when `a` should run before `b`.
    ///
    /// Instances that the inter-instance comparator does not order are
    /// compared by their contents, as if they were one instance.
    pub fn compare(&self, a: (VertexId, &ScopeTag), b: (VertexId, &ScopeTag)) -> Ordering {
        let (ca, cb) = (self.topo.chain(a.0), self.topo.chain(b.0));
        debug_assert_eq!(ca.len(), a.1.depth(), "tag depth of {:?}", a);
        debug_assert_eq!(cb.len(), b.1.depth(), "tag depth of {:?}", b);
        let (ta, tb) = (a.1.elements(), b.1.elements());
        let m = ca.len().min(cb.len());
        let mut parent = None;
        let mut diverged = false;
        for d in 0..m {
            let (sa, sb) = (ca[d], cb[d]);
            if sa != sb {
                return (self.intra_of(parent))(self.virtual_node(sa), self.virtual_node(sb));
            }
            diverged |= ta[d] != tb[d];
            if diverged {
                let o = (self.inter[sa as usize])(&a.1.prefix(d + 1), &b.1.prefix(d + 1));
                if o != Ordering::Equal {
                    return o;
                }
            }
            parent = Some(sa);
        }
        let na = if ca.len() == m { self.plain(a.0) } else { self.virtual_node(ca[m]) };
        let nb = if cb.len() == m { self.plain(b.0) } else { self.virtual_node(cb[m]) };
        if na == nb {
            return Ordering::Equal;
        }
        (self.intra_of(parent))(na, nb)
    }
}

/// One-shot comparison; builds the topology and resolves policies each call.
pub fn schedule_compare(
    a: (VertexId, &ScopeTag),
    b: (VertexId, &ScopeTag),
    df: &LogicalDataflow,
    reg: &PolicyRegistry,
) -> Result<Ordering, ModelError> {
    let topo = Topology::build(df).map_err(|r| ModelError::Invalid(r.to_string()))?;
    Ok(Scheduler::new(df, &topo, reg)?.compare(a, b))
}
