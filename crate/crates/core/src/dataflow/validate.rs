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

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;

use serde::Serialize;

use super::model::{EdgeId, LogicalDataflow, OperatorSpec, ScopeId, ScopeKind, VertexId};
use super::tag::MAX_SCOPE_DEPTH;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum Violation {
    BadId { what: String },
    UnknownVertex { edge: EdgeId, vertex: VertexId },
    PortMisdeclared { scope: ScopeId, vertex: VertexId },
    DetachedSystemVertex { vertex: VertexId },
    NotWellNested { a: ScopeId, b: ScopeId },
    WrongDepth { scope: ScopeId, declared: u32, actual: u32 },
    TooDeep { scope: ScopeId },
    CycleOutsideScope { vertices: Vec<VertexId> },
    BackwardTargetNotIngress { edge: EdgeId },
    BackwardSourceNotDirect { edge: EdgeId, scope: ScopeId },
    BypassesIngress { edge: EdgeId, scope: ScopeId },
    BypassesEgress { edge: EdgeId, scope: ScopeId },
    CrossesScopes { edge: EdgeId },
    KindMismatch { scope: ScopeId, kind: ScopeKind },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::BadId { what } => write!(f, "bad id: {what}"),
            Violation::UnknownVertex { edge, vertex } => write!(f, "edge {edge}: unknown vertex {vertex}"),
            Violation::PortMisdeclared { scope, vertex } => {
                write!(f, "scope {scope}: vertex {vertex} is not a valid ingress/egress port")
            }
            Violation::DetachedSystemVertex { vertex } => {
                write!(f, "vertex {vertex}: system vertex not attached to a scope")
            }
            Violation::NotWellNested { a, b } => write!(f, "scopes {a} and {b}: not well-nested"),
            Violation::WrongDepth { scope, declared, actual } => {
                write!(f, "scope {scope}: declared depth {declared}, actual {actual}")
            }
            Violation::TooDeep { scope } => write!(f, "scope {scope}: nesting deeper than {MAX_SCOPE_DEPTH}"),
            Violation::CycleOutsideScope { vertices } => write!(f, "cycle outside scope through vertices {vertices:?}"),
            Violation::BackwardTargetNotIngress { edge } => {
                write!(f, "edge {edge}: backward edge does not target a loop ingress")
            }
            Violation::BackwardSourceNotDirect { edge, scope } => {
                write!(f, "edge {edge}: backward edge source is not directly inside scope {scope}")
            }
            Violation::BypassesIngress { edge, scope } => write!(f, "edge {edge}: enters scope {scope} bypassing its ingress"),
            Violation::BypassesEgress { edge, scope } => write!(f, "edge {edge}: leaves scope {scope} bypassing its egress"),
            Violation::CrossesScopes { edge } => write!(f, "edge {edge}: crosses unrelated scopes"),
            Violation::KindMismatch { scope, kind } => {
                write!(f, "scope {scope}: kind {kind:?} inconsistent with its backward edges")
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return f.write_str("ok");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("\n")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Derived structure of a valid dataflow.
#[derive(Clone, Debug)]
pub struct Topology {
    /// Innermost scope having the vertex as an internal vertex.
    pub home: Vec<Option<ScopeId>>,
    pub parent: Vec<Option<ScopeId>>,
    pub ingress_of: HashMap<VertexId, ScopeId>,
    pub egress_of: HashMap<VertexId, ScopeId>,
    pub out_edges: Vec<Vec<EdgeId>>,
    pub in_edges: Vec<Vec<EdgeId>>,
    /// Longest forward path from any source vertex.
    pub distance: Vec<u32>,
    chains: Vec<Vec<ScopeId>>,
}

impl Topology {
    /// Validates `df` and derives its topology.
    pub fn build(df: &LogicalDataflow) -> Result<Topology, ValidationReport> {
        let mut report = ValidationReport::default();
        let topo = check(df, &mut report);
        match topo {
            Some(t) if report.is_ok() => Ok(t),
            _ => Err(report),
        }
    }

    /// Scopes enclosing `v` as an internal vertex, outermost first.
    pub fn chain(&self, v: VertexId) -> &[ScopeId] {
        &self.chains[v as usize]
    }

    /// Scopes enclosing scope `s` including itself, outermost first.
    pub fn scope_chain(&self, s: ScopeId) -> Vec<ScopeId> {
        let mut c = vec![s];
        let mut cur = s;
        while let Some(p) = self.parent[cur as usize] {
            c.push(p);
            cur = p;
        }
        c.reverse();
        c
    }

    /// Number of scopes enclosing `v`; the depth of the tag its operators carry.
    pub fn tag_depth(&self, v: VertexId) -> usize {
        self.chains[v as usize].len()
    }

    pub fn is_ingress(&self, v: VertexId) -> Option<ScopeId> {
        self.ingress_of.get(&v).copied()
    }

    pub fn is_egress(&self, v: VertexId) -> Option<ScopeId> {
        self.egress_of.get(&v).copied()
    }
}

pub fn validate_dataflow(df: &LogicalDataflow) -> ValidationReport {
    let mut report = ValidationReport::default();
    check(df, &mut report);
    report
}

fn innermost(df: &LogicalDataflow, pred: impl Fn(&BTreeSet<VertexId>) -> bool) -> Option<ScopeId> {
    df.scopes.iter().filter(|s| pred(&s.internal)).min_by_key(|s| (s.internal.len(), s.id)).map(|s| s.id)
}

fn check(df: &LogicalDataflow, report: &mut ValidationReport) -> Option<Topology> {
    let n = df.vertices.len();
    let v = &mut report.violations;
    for (i, x) in df.vertices.iter().enumerate() {
        if x.id as usize != i {
            v.push(Violation::BadId { what: format!("vertex at index {i} has id {}", x.id) });
        }
    }
    for (i, x) in df.scopes.iter().enumerate() {
        if x.id as usize != i {
            v.push(Violation::BadId { what: format!("scope at index {i} has id {}", x.id) });
        }
        for p in x.full() {
            if p as usize >= n {
                v.push(Violation::BadId { what: format!("scope {i} references vertex {p}") });
            }
        }
    }
    for (i, e) in df.edges.iter().enumerate() {
        if e.id as usize != i {
            v.push(Violation::BadId { what: format!("edge at index {i} has id {}", e.id) });
        }
        for x in [e.src, e.dst] {
            if x as usize >= n {
                v.push(Violation::UnknownVertex { edge: e.id, vertex: x });
            }
        }
    }
    if !v.is_empty() {
        return None;
    }

    let mut ingress_of = HashMap::new();
    let mut egress_of = HashMap::new();
    for s in &df.scopes {
        for (port, want, map) in
            [(s.ingress, OperatorSpec::Ingress, &mut ingress_of), (s.egress, OperatorSpec::Egress, &mut egress_of)]
        {
            if df.vertex(port).op != want || s.internal.contains(&port) || s.ingress == s.egress {
                v.push(Violation::PortMisdeclared { scope: s.id, vertex: port });
            }
            if map.insert(port, s.id).is_some() {
                v.push(Violation::PortMisdeclared { scope: s.id, vertex: port });
            }
        }
    }
    for x in &df.vertices {
        if x.op.is_system() && !ingress_of.contains_key(&x.id) && !egress_of.contains_key(&x.id) {
            v.push(Violation::DetachedSystemVertex { vertex: x.id });
        }
    }

    let fulls: Vec<BTreeSet<VertexId>> = df.scopes.iter().map(|s| s.full()).collect();
    for a in &df.scopes {
        for b in &df.scopes {
            if a.id >= b.id {
                continue;
            }
            let (fa, fb) = (&fulls[a.id as usize], &fulls[b.id as usize]);
            let ok = fa.is_disjoint(fb) || fa.is_subset(&b.internal) || fb.is_subset(&a.internal);
            if !ok {
                v.push(Violation::NotWellNested { a: a.id, b: b.id });
            }
        }
    }

    let parent: Vec<Option<ScopeId>> = df
        .scopes
        .iter()
        .map(|s| innermost(df, |int| fulls[s.id as usize].is_subset(int)))
        .collect();
    let mut depths = vec![0u32; df.scopes.len()];
    for s in &df.scopes {
        let mut d = 1;
        let mut cur = parent[s.id as usize];
        while let Some(p) = cur {
            d += 1;
            if d as usize > df.scopes.len() + 1 {
                break;
            }
            cur = parent[p as usize];
        }
        depths[s.id as usize] = d;
        if d != s.depth {
            v.push(Violation::WrongDepth { scope: s.id, declared: s.depth, actual: d });
        }
        if d as usize > MAX_SCOPE_DEPTH {
            v.push(Violation::TooDeep { scope: s.id });
        }
    }
    let home: Vec<Option<ScopeId>> = (0..n as VertexId).map(|x| innermost(df, |int| int.contains(&x))).collect();

    // A scope is an ancestor-or-self of another.
    let within = |inner: Option<ScopeId>, outer: Option<ScopeId>| -> bool {
        let mut cur = inner;
        loop {
            if cur == outer {
                return true;
            }
            match cur {
                Some(c) => cur = parent[c as usize],
                None => return false,
            }
        }
    };

    for e in &df.edges {
        if e.backward {
            match ingress_of.get(&e.dst) {
                Some(&s) => {
                    if home[e.src as usize] != Some(s) {
                        v.push(Violation::BackwardSourceNotDirect { edge: e.id, scope: s });
                    }
                }
                None => v.push(Violation::BackwardTargetNotIngress { edge: e.id }),
            }
            continue;
        }
        let src_side = ingress_of.get(&e.src).copied().or(home[e.src as usize]);
        let tgt_side = egress_of.get(&e.dst).copied().or(home[e.dst as usize]);
        if src_side == tgt_side {
            continue;
        }
        if within(tgt_side, src_side) {
            // Entering: name the outermost scope skipped.
            let mut s = tgt_side.expect("strictly inside");
            while parent[s as usize] != src_side {
                s = parent[s as usize].expect("within");
            }
            v.push(Violation::BypassesIngress { edge: e.id, scope: s });
        } else if within(src_side, tgt_side) {
            v.push(Violation::BypassesEgress { edge: e.id, scope: src_side.expect("strictly inside") });
        } else {
            v.push(Violation::CrossesScopes { edge: e.id });
        }
    }

    for s in &df.scopes {
        let has_back = df.edges.iter().any(|e| e.backward && e.dst == s.ingress);
        if has_back != (s.kind == ScopeKind::Loop) {
            v.push(Violation::KindMismatch { scope: s.id, kind: s.kind });
        }
    }

    let mut out_edges = vec![Vec::new(); n];
    let mut in_edges = vec![Vec::new(); n];
    for e in &df.edges {
        out_edges[e.src as usize].push(e.id);
        in_edges[e.dst as usize].push(e.id);
    }
    let mut indeg = vec![0usize; n];
    for e in df.edges.iter().filter(|e| !e.backward) {
        indeg[e.dst as usize] += 1;
    }
    let mut distance = vec![0u32; n];
    let mut queue: VecDeque<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
    let mut seen = 0;
    while let Some(x) = queue.pop_front() {
        seen += 1;
        for &eid in &out_edges[x] {
            let e = df.edge(eid);
            if e.backward {
                continue;
            }
            let d = e.dst as usize;
            distance[d] = distance[d].max(distance[x] + 1);
            indeg[d] -= 1;
            if indeg[d] == 0 {
                queue.push_back(d);
            }
        }
    }
    if seen < n {
        let vertices = (0..n).filter(|&i| indeg[i] > 0).map(|i| i as VertexId).collect();
        v.push(Violation::CycleOutsideScope { vertices });
    }

    let chains = (0..n)
        .map(|x| {
            let mut c = Vec::new();
            let mut cur = home[x];
            while let Some(s) = cur {
                c.push(s);
                cur = parent[s as usize];
                if c.len() > df.scopes.len() {
                    break;
                }
            }
            c.reverse();
            c
        })
        .collect();
    Some(Topology { home, parent, ingress_of, egress_of, out_edges, in_edges, distance, chains })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::dataflow::model::{PartitionFn, ScopeDecl};

    fn scope(id: ScopeId, kind: ScopeKind, ingress: VertexId, egress: VertexId, internal: &[VertexId], depth: u32) -> ScopeDecl {
        ScopeDecl {
            id,
            kind,
            ingress,
            egress,
            internal: internal.iter().copied().collect(),
            depth,
            max_si: None,
            inter_si_policy: "bfs".into(),
            intra_si_policy: "dfs".into(),
        }
    }

    fn df() -> LogicalDataflow {
        LogicalDataflow { vertices: vec![], edges: vec![], scopes: vec![], root_intra_policy: "fifo".into() }
    }

    /// source -> ingress -> A -> B -> egress -> sink, with B -> ingress backward.
    pub(crate) fn loop_fixture() -> LogicalDataflow {
        let mut d = df();
        let src = d.add_vertex("src", OperatorSpec::Source);
        let ing = d.add_vertex("ingress", OperatorSpec::Ingress);
        let a = d.add_vertex("a", OperatorSpec::Identity);
        let b = d.add_vertex("b", OperatorSpec::Identity);
        let eg = d.add_vertex("egress", OperatorSpec::Egress);
        let sink = d.add_vertex("sink", OperatorSpec::Sink { limit: None });
        d.add_edge(src, ing, 0, false, PartitionFn::ForwardLocal);
        d.add_edge(ing, a, 0, false, PartitionFn::ForwardLocal);
        d.add_edge(a, b, 0, false, PartitionFn::ForwardLocal);
        d.add_edge(b, eg, 0, false, PartitionFn::ByTag);
        d.add_edge(b, ing, 1, true, PartitionFn::ForwardLocal);
        d.add_edge(eg, sink, 0, false, PartitionFn::Single);
        d.scopes.push(scope(0, ScopeKind::Loop, ing, eg, &[a, b], 1));
        d
    }

    #[test]
    fn loop_scope_is_valid() {
        let d = loop_fixture();
        let r = validate_dataflow(&d);
        assert!(r.is_ok(), "{r}");
        let t = Topology::build(&d).unwrap();
        assert_eq!(t.chain(2), &[0]);
        assert_eq!(t.chain(1), &[] as &[ScopeId]);
        assert_eq!(t.distance, vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn cycle_outside_scope() {
        let mut d = df();
        let a = d.add_vertex("a", OperatorSpec::Identity);
        let b = d.add_vertex("b", OperatorSpec::Identity);
        d.add_edge(a, b, 0, false, PartitionFn::ForwardLocal);
        d.add_edge(b, a, 0, false, PartitionFn::ForwardLocal);
        let r = validate_dataflow(&d);
        assert_eq!(r.violations, vec![Violation::CycleOutsideScope { vertices: vec![0, 1] }]);
        assert!(r.to_string().contains("cycle outside scope"));
    }

    #[test]
    fn overlapping_scopes() {
        let mut d = df();
        let i0 = d.add_vertex("i0", OperatorSpec::Ingress);
        let i1 = d.add_vertex("i1", OperatorSpec::Ingress);
        let x = d.add_vertex("x", OperatorSpec::Identity);
        let y = d.add_vertex("y", OperatorSpec::Identity);
        let z = d.add_vertex("z", OperatorSpec::Identity);
        let e0 = d.add_vertex("e0", OperatorSpec::Egress);
        let e1 = d.add_vertex("e1", OperatorSpec::Egress);
        d.scopes.push(scope(0, ScopeKind::Branch, i0, e0, &[x, y], 1));
        d.scopes.push(scope(1, ScopeKind::Branch, i1, e1, &[y, z], 1));
        let r = validate_dataflow(&d);
        assert!(r.violations.contains(&Violation::NotWellNested { a: 0, b: 1 }), "{r}");
        assert!(r.to_string().contains("not well-nested"));
    }

    #[test]
    fn backward_edge_must_target_ingress() {
        let mut d = loop_fixture();
        d.edges[4].dst = 2;
        let r = validate_dataflow(&d);
        assert!(r.violations.contains(&Violation::BackwardTargetNotIngress { edge: 4 }), "{r}");
    }

    #[test]
    fn edge_bypassing_egress() {
        let mut d = loop_fixture();
        d.add_edge(3, 5, 0, false, PartitionFn::Single);
        let r = validate_dataflow(&d);
        assert_eq!(r.violations, vec![Violation::BypassesEgress { edge: 6, scope: 0 }]);
    }

    #[test]
    fn edge_bypassing_ingress_and_depth() {
        let mut d = loop_fixture();
        d.add_edge(0, 2, 0, false, PartitionFn::ForwardLocal);
        d.scopes[0].depth = 2;
        let r = validate_dataflow(&d);
        assert!(r.violations.contains(&Violation::BypassesIngress { edge: 6, scope: 0 }));
        assert!(r.violations.contains(&Violation::WrongDepth { scope: 0, declared: 2, actual: 1 }));
    }

    #[test]
    fn kind_must_match_backward_edges() {
        let mut d = loop_fixture();
        d.scopes[0].kind = ScopeKind::Branch;
        let r = validate_dataflow(&d);
        assert_eq!(r.violations, vec![Violation::KindMismatch { scope: 0, kind: ScopeKind::Branch }]);
    }
}
