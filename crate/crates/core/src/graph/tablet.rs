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

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use super::store::{Direction, LabelId, PropertyGraph, Vid};
use super::value::PropValue;
use super::GraphError;

pub type TabletId = u32;
pub type ExecId = u32;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AdjEntry {
    pub label: LabelId,
    pub neighbor: Vid,
    pub edge: u32,
}

/// An exclusive partition of the vertices of a graph, carrying every in and
/// out edge of those vertices. Adjacency keeps insertion (CSV) order.
#[derive(Debug)]
pub struct Tablet {
    id: TabletId,
    vertices: Vec<Vid>,
    local: HashMap<Vid, u32>,
    out_adj: Vec<Vec<AdjEntry>>,
    in_adj: Vec<Vec<AdjEntry>>,
}

impl Tablet {
    pub fn id(&self) -> TabletId {
        self.id
    }

    pub fn vertices(&self) -> &[Vid] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn owns(&self, v: Vid) -> bool {
        self.local.contains_key(&v)
    }

    fn slot(&self, v: Vid) -> Result<usize, GraphError> {
        self.local
            .get(&v)
            .map(|s| *s as usize)
            .ok_or(GraphError::RoutingFault { tablet: self.id, vertex: v })
    }

    /// Raw adjacency of an owned vertex in one direction.
    pub fn adjacency(&self, v: Vid, dir: Direction) -> Result<&[AdjEntry], GraphError> {
        let s = self.slot(v)?;
        Ok(match dir {
            Direction::Out => &self.out_adj[s],
            Direction::In => &self.in_adj[s],
        })
    }

    /// Neighbors of `v` along edges labeled `label`, with edge properties.
    pub fn neighbors<'g>(
        &self,
        graph: &'g PropertyGraph,
        v: Vid,
        dir: Direction,
        label: Option<LabelId>,
    ) -> Result<Vec<(Vid, &'g [PropValue])>, GraphError> {
        let adj = self.adjacency(v, dir)?;
        Ok(adj
            .iter()
            .filter(|a| label.is_none_or(|l| a.label == l))
            .map(|a| (a.neighbor, graph.edge(a.edge).props.as_slice()))
            .collect())
    }

    /// Properties of an owned vertex.
    pub fn props<'g>(&self, graph: &'g PropertyGraph, v: Vid) -> Result<&'g [PropValue], GraphError> {
        self.slot(v)?;
        Ok(graph.props(v))
    }
}

/// Deterministic 64-bit mixer (splitmix64 finalizer).
pub fn mix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seeded hash of a vertex's identity used for tablet assignment.
pub fn vertex_hash(seed: u64, vtype: u16, id: i64) -> u64 {
    mix64(seed ^ mix64(((vtype as u64) << 48) ^ (id as u64)))
}

/// A property graph split into tablets by seeded hashing of (type, id).
#[derive(Debug)]
pub struct PartitionedGraph {
    graph: Arc<PropertyGraph>,
    tablets: Vec<Tablet>,
    tablet_of: Vec<TabletId>,
    seed: u64,
}

impl PartitionedGraph {
    pub fn graph(&self) -> &PropertyGraph {
        &self.graph
    }

    pub fn graph_arc(&self) -> Arc<PropertyGraph> {
        self.graph.clone()
    }

    pub fn tablets(&self) -> &[Tablet] {
        &self.tablets
    }

    pub fn tablet(&self, t: TabletId) -> &Tablet {
        &self.tablets[t as usize]
    }

    pub fn num_tablets(&self) -> usize {
        self.tablets.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Tablet holding vertex `v`.
    pub fn route(&self, v: Vid) -> TabletId {
        self.tablet_of[v as usize]
    }
}

/// Splits `graph` into `num_tablets` tablets; every vertex lands in the tablet
/// `hash(seed, type, id) mod num_tablets` together with all of its edges.
pub fn partition(graph: Arc<PropertyGraph>, num_tablets: usize, seed: u64) -> PartitionedGraph {
    let num_tablets = num_tablets.max(1);
    let n = graph.num_vertices();
    let mut tablet_of = Vec::with_capacity(n);
    let mut tablets: Vec<Tablet> = (0..num_tablets)
        .map(|i| Tablet {
            id: i as TabletId,
            vertices: Vec::new(),
            local: HashMap::new(),
            out_adj: Vec::new(),
            in_adj: Vec::new(),
        })
        .collect();
    for v in 0..n as Vid {
        let r = graph.vertex_ref(v);
        let t = (vertex_hash(seed, r.vtype, r.id) % num_tablets as u64) as usize;
        tablet_of.push(t as TabletId);
        let tab = &mut tablets[t];
        tab.local.insert(v, tab.vertices.len() as u32);
        tab.vertices.push(v);
        tab.out_adj.push(Vec::new());
        tab.in_adj.push(Vec::new());
    }
    for (i, e) in graph.edges().iter().enumerate() {
        let st = &mut tablets[tablet_of[e.src as usize] as usize];
        let s = st.local[&e.src] as usize;
        st.out_adj[s].push(AdjEntry { label: e.label, neighbor: e.dst, edge: i as u32 });
        let dt = &mut tablets[tablet_of[e.dst as usize] as usize];
        let d = dt.local[&e.dst] as usize;
        dt.in_adj[d].push(AdjEntry { label: e.label, neighbor: e.src, edge: i as u32 });
    }
    PartitionedGraph { graph, tablets, tablet_of, seed }
}

/// A published tablet → executor ownership map.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoutingTable {
    pub version: u64,
    pub num_executors: u32,
    owners: Vec<ExecId>,
}

impl RoutingTable {
    /// Tablet `t` owned by executor `t mod num_executors`.
    pub fn round_robin(num_tablets: usize, num_executors: usize) -> RoutingTable {
        let n = num_executors.max(1);
        RoutingTable {
            version: 0,
            num_executors: n as u32,
            owners: (0..num_tablets).map(|t| (t % n) as ExecId).collect(),
        }
    }

    pub fn from_owners(owners: Vec<ExecId>, num_executors: usize) -> RoutingTable {
        assert!(owners.iter().all(|o| (*o as usize) < num_executors), "owner out of range");
        RoutingTable { version: 0, num_executors: num_executors as u32, owners }
    }

    pub fn owner(&self, t: TabletId) -> ExecId {
        self.owners[t as usize]
    }

    pub fn owners(&self) -> &[ExecId] {
        &self.owners
    }

    pub fn num_tablets(&self) -> usize {
        self.owners.len()
    }

    pub fn tablets_of(&self, exec: ExecId) -> Vec<TabletId> {
        (0..self.owners.len() as TabletId).filter(|t| self.owners[*t as usize] == exec).collect()
    }

    /// Copy with one tablet reassigned and the version bumped.
    pub fn with_move(&self, t: TabletId, to: ExecId) -> RoutingTable {
        let mut next = self.clone();
        next.owners[t as usize] = to;
        next.version += 1;
        next
    }
}

/// Atomically swappable routing snapshot shared by the engine.
#[derive(Debug)]
pub struct RoutingHandle {
    current: RwLock<Arc<RoutingTable>>,
}

impl RoutingHandle {
    pub fn new(table: RoutingTable) -> RoutingHandle {
        RoutingHandle { current: RwLock::new(Arc::new(table)) }
    }

    pub fn snapshot(&self) -> Arc<RoutingTable> {
        self.current.read().expect("routing lock").clone()
    }

    /// Publishes `next` if the current snapshot still has version `expected`.
    pub fn compare_and_publish(&self, expected: u64, next: RoutingTable) -> Result<Arc<RoutingTable>, Arc<RoutingTable>> {
        let mut guard = self.current.write().expect("routing lock");
        if guard.version != expected {
            return Err(guard.clone());
        }
        let next = Arc::new(next);
        *guard = next.clone();
        Ok(next)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::generate::{generate, GenSpec};

    #[test]
    fn single_tablet_holds_everything() {
        let g = Arc::new(generate(&GenSpec::Cycle { n: 10 }, 1));
        let p = partition(g, 1, 7);
        assert_eq!(p.num_tablets(), 1);
        assert_eq!(p.tablet(0).len(), 10);
    }

    #[test]
    fn partition_is_deterministic() {
        let g = Arc::new(generate(&GenSpec::PowerLaw { n: 300, m: 2 }, 3));
        let a = partition(g.clone(), 8, 42);
        let b = partition(g.clone(), 8, 42);
        let ra: Vec<_> = (0..g.num_vertices() as Vid).map(|v| a.route(v)).collect();
        let rb: Vec<_> = (0..g.num_vertices() as Vid).map(|v| b.route(v)).collect();
        assert_eq!(ra, rb);
    }

    #[test]
    fn misrouted_vertex_is_a_fault() {
        let g = Arc::new(generate(&GenSpec::Cycle { n: 16 }, 1));
        let p = partition(g, 4, 1);
        let v = p.tablet(0).vertices()[0];
        let other = p.tablet(1);
        assert!(matches!(
            other.neighbors(p.graph(), v, Direction::Out, None),
            Err(GraphError::RoutingFault { .. })
        ));
    }

    #[test]
    fn stale_snapshot_publication_is_rejected() {
        let h = RoutingHandle::new(RoutingTable::round_robin(4, 2));
        let s = h.snapshot();
        let next = s.with_move(0, 1);
        assert!(h.compare_and_publish(s.version, next.clone()).is_ok());
        assert!(h.compare_and_publish(s.version, next).is_err());
    }
}
