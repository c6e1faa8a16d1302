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

use std::sync::Arc;

use crate::dataflow::{
    Access, EdgeDecl, EdgeId, LogicalDataflow, OperatorSpec, PartitionFn, PolicyRegistry, ScopeId, ScopeKind, ScopeTag,
    Scheduler, Topology, VertexId,
};
use crate::graph::{mix64, ConstSets, ExecId, LabelId, PartitionedGraph, RoutingTable, Vid};

use super::QueryError;

/// Pseudo edge feeding the source vertex from outside the dataflow.
pub const EXTERNAL_EDGE: EdgeId = u32::MAX;

#[derive(Clone, Debug)]
pub struct VertexPlan {
    /// Executor of each operator (partition) of the vertex.
    pub parts: Vec<ExecId>,
    /// Operators per executor.
    pub local: Vec<Vec<u32>>,
    /// Executors hosting at least one operator, ascending.
    pub hosts: Vec<ExecId>,
    /// Incoming edges with the total EOS weight each must deliver.
    pub expect: Vec<(EdgeId, u32)>,
    pub graph_accessing: bool,
    /// Resolved edge label of an expand vertex (`None`: any label).
    pub label: Option<LabelId>,
}

/// A dataflow parallelized over executors, bound to one routing snapshot
/// and to its runtime parameters.
#[derive(Debug)]
pub struct PhysicalPlan {
    pub df: LogicalDataflow,
    pub topo: Topology,
    pub sched: Scheduler,
    pub graph: Arc<PartitionedGraph>,
    pub routing: Arc<RoutingTable>,
    pub num_executors: u32,
    pub vertices: Vec<VertexPlan>,
    pub source: VertexId,
    pub start: Vec<Vid>,
    pub sets: ConstSets,
}

fn tag_hash(tag: &ScopeTag) -> u64 {
    tag.elements().iter().fold(0x5eed, |h, e| mix64(h ^ *e as u64))
}

impl PhysicalPlan {
    pub fn vertex(&self, v: VertexId) -> &VertexPlan {
        &self.vertices[v as usize]
    }

    pub fn parts(&self, v: VertexId) -> u32 {
        self.vertices[v as usize].parts.len() as u32
    }

    pub fn exec_of(&self, v: VertexId, part: u32) -> ExecId {
        self.vertices[v as usize].parts[part as usize]
    }

    /// Egress operator responsible for scope instance `si_tag`.
    pub fn egress_part(&self, egress: VertexId, si_tag: &ScopeTag) -> u32 {
        (tag_hash(si_tag) % self.parts(egress) as u64) as u32
    }

    /// Ingress operator that allocated branch ordinal `ordinal`.
    pub fn branch_owner(&self, ingress: VertexId, ordinal: u32) -> u32 {
        (ordinal - 1) % self.parts(ingress)
    }

    /// Operator index of vertex `w` on executor `exec`, if any (ingress
    /// operators: the local one).
    pub fn local_part(&self, w: VertexId, exec: ExecId) -> Option<u32> {
        self.vertices[w as usize].local.get(exec as usize).and_then(|l| l.first().copied())
    }

    /// Destination operator of a DATA message on edge `e`.
    pub fn target_part(&self, e: &EdgeDecl, exec: ExecId, vertex: Vid, trav: Option<u64>, tag: &ScopeTag) -> u32 {
        let w = e.dst;
        let vp = &self.vertices[w as usize];
        if e.backward {
            return self.local_part(w, exec).expect("loop ingress operator on every hosting executor");
        }
        if self.topo.is_egress(w).is_some() {
            return self.egress_part(w, tag);
        }
        if vp.graph_accessing {
            return self.graph.route(vertex);
        }
        let n = vp.parts.len() as u64;
        match e.partition {
            PartitionFn::Single => 0,
            PartitionFn::ByTag => (tag_hash(tag) % n) as u32,
            PartitionFn::ByTraversal => (mix64(trav.unwrap_or(0)) % n) as u32,
            PartitionFn::ByVertex | PartitionFn::ForwardLocal => {
                let h = mix64(vertex as u64);
                let local = &vp.local[exec as usize];
                if local.is_empty() {
                    (h % n) as u32
                } else {
                    local[(h % local.len() as u64) as usize]
                }
            }
        }
    }
}

/// Places every vertex of `df` on executors: graph-accessing vertices get one
/// operator per tablet on its owner, pure vertices `pure_parallelism`
/// operators (one for single-instance operators), scope ports one operator
/// per executor hosting the scope's internals.
pub fn parallelize(
    df: LogicalDataflow,
    graph: Arc<PartitionedGraph>,
    routing: Arc<RoutingTable>,
    pure_parallelism: u32,
    reg: &PolicyRegistry,
) -> Result<PhysicalPlan, QueryError> {
    let topo = Topology::build(&df).map_err(|r| QueryError::Invalid(r.to_string()))?;
    let sched = Scheduler::new(&df, &topo, reg).map_err(|e| QueryError::Invalid(e.to_string()))?;
    let n = routing.num_executors;
    assert_eq!(routing.num_tablets(), graph.num_tablets(), "routing table does not match the graph");
    let pure = pure_parallelism.max(1);
    let mut parts: Vec<Option<Vec<ExecId>>> = vec![None; df.vertices.len()];
    for v in &df.vertices {
        if v.op.is_system() {
            continue;
        }
        let p = if v.access == Access::GraphAccessing {
            (0..graph.num_tablets() as u32).map(|t| routing.owner(t)).collect()
        } else if v.op.is_singleton() {
            vec![0]
        } else {
            (0..pure).map(|p| p % n).collect()
        };
        parts[v.id as usize] = Some(p);
    }
    // Inner scopes first so outer scopes see their ports' placement.
    let mut order: Vec<ScopeId> = (0..df.scopes.len() as ScopeId).collect();
    order.sort_by_key(|s| std::cmp::Reverse(df.scope(*s).depth));
    for s in order {
        let sd = df.scope(s);
        let mut hosts: Vec<ExecId> =
            sd.internal.iter().filter_map(|v| parts[*v as usize].as_ref()).flatten().copied().collect();
        hosts.sort_unstable();
        hosts.dedup();
        if hosts.is_empty() {
            hosts.push(0);
        }
        parts[sd.ingress as usize] = Some(hosts.clone());
        parts[sd.egress as usize] = Some(hosts);
    }
    let mut vertices = Vec::with_capacity(df.vertices.len());
    for v in &df.vertices {
        let p = parts[v.id as usize].clone().expect("every vertex placed");
        let mut local = vec![Vec::new(); n as usize];
        for (i, e) in p.iter().enumerate() {
            local[*e as usize].push(i as u32);
        }
        let mut hosts = p.clone();
        hosts.sort_unstable();
        hosts.dedup();
        let label = match &v.op {
            OperatorSpec::Expand { label, .. } if !label.is_empty() => {
                Some(graph.graph().label_id(label).unwrap_or(LabelId::MAX))
            }
            _ => None,
        };
        vertices.push(VertexPlan {
            parts: p,
            local,
            hosts,
            expect: Vec::new(),
            graph_accessing: v.access == Access::GraphAccessing,
            label,
        });
    }
    let mut source = None;
    for v in &df.vertices {
        let mut expect = Vec::new();
        if v.op == OperatorSpec::Source {
            source = Some(v.id);
            expect.push((EXTERNAL_EDGE, 1));
        }
        for &eid in &topo.in_edges[v.id as usize] {
            let e = df.edge(eid);
            let w = match topo.is_ingress(e.src) {
                Some(s) if !e.backward && df.scope(s).internal.contains(&v.id) => match df.scope(s).kind {
                    ScopeKind::Branch => 1,
                    ScopeKind::Loop => vertices[e.src as usize].parts.len() as u32,
                },
                _ => vertices[e.src as usize].parts.len() as u32,
            };
            expect.push((eid, w));
        }
        vertices[v.id as usize].expect = expect;
    }
    let source = source.ok_or_else(|| QueryError::Invalid("dataflow has no source vertex".into()))?;
    Ok(PhysicalPlan {
        df,
        topo,
        sched,
        graph,
        routing,
        num_executors: n,
        vertices,
        source,
        start: Vec::new(),
        sets: ConstSets::new(),
    })
}
