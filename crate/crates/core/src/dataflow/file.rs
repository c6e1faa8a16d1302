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

//! TOML dataflow description files.
//!
//! ```toml
//! version = 1
//! root_intra_policy = "fifo"
//!
//! [[vertex]]
//! id = 0
//! name = "start"
//! op = { kind = "source" }
//!
//! [[edge]]
//! src = 0
//! dst = 1
//! partition = "by_vertex"   # backward = true, port = 1 are optional
//!
//! [[scope]]
//! kind = "loop"
//! members = [1, 2]          # internal vertices, nested scopes included
//! inter_si_policy = "bfs"
//! intra_si_policy = "dfs"
//! max_si = 4                # optional
//! ```
//!
//! Scopes without `ingress`/`egress` get system ports synthesized, with every
//! entering, leaving and backward edge spliced through them. Omitted depths
//! are computed from containment.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{
    Access, EdgeDecl, LogicalDataflow, OperatorSpec, PartitionFn, ScopeDecl, ScopeKind, VertexDecl, VertexId,
    DATAFLOW_FORMAT_VERSION,
};
use super::ModelError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VertexEntry {
    pub id: VertexId,
    pub name: String,
    pub op: OperatorSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub access: Option<Access>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stateful: Option<bool>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub cancel_trigger: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeEntry {
    pub src: VertexId,
    pub dst: VertexId,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub backward: bool,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub port: u8,
    #[serde(default = "default_partition")]
    pub partition: PartitionFn,
}

fn is_zero(p: &u8) -> bool {
    *p == 0
}

fn default_partition() -> PartitionFn {
    PartitionFn::ForwardLocal
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScopeEntry {
    pub kind: ScopeKind,
    pub members: Vec<VertexId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ingress: Option<VertexId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub egress: Option<VertexId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_si: Option<u32>,
    #[serde(default = "default_policy")]
    pub inter_si_policy: String,
    #[serde(default = "default_policy")]
    pub intra_si_policy: String,
}

fn default_policy() -> String {
    "fifo".to_string()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataflowFile {
    pub version: u32,
    #[serde(default = "default_policy")]
    pub root_intra_policy: String,
    #[serde(default, rename = "vertex")]
    pub vertices: Vec<VertexEntry>,
    #[serde(default, rename = "edge")]
    pub edges: Vec<EdgeEntry>,
    #[serde(default, rename = "scope")]
    pub scopes: Vec<ScopeEntry>,
}

impl DataflowFile {
    pub fn from_dataflow(df: &LogicalDataflow) -> DataflowFile {
        DataflowFile {
            version: DATAFLOW_FORMAT_VERSION,
            root_intra_policy: df.root_intra_policy.clone(),
            vertices: df
                .vertices
                .iter()
                .map(|v| VertexEntry {
                    id: v.id,
                    name: v.name.clone(),
                    op: v.op.clone(),
                    access: Some(v.access),
                    stateful: Some(v.stateful),
                    cancel_trigger: v.cancel_trigger,
                    region: v.region,
                })
                .collect(),
            edges: df
                .edges
                .iter()
                .map(|e| EdgeEntry { src: e.src, dst: e.dst, backward: e.backward, port: e.port, partition: e.partition })
                .collect(),
            scopes: df
                .scopes
                .iter()
                .map(|s| ScopeEntry {
                    kind: s.kind,
                    members: s.internal.iter().copied().collect(),
                    ingress: Some(s.ingress),
                    egress: Some(s.egress),
                    depth: Some(s.depth),
                    max_si: s.max_si,
                    inter_si_policy: s.inter_si_policy.clone(),
                    intra_si_policy: s.intra_si_policy.clone(),
                })
                .collect(),
        }
    }

    /// Builds the dataflow, synthesizing missing scope ports.
    pub fn into_dataflow(self) -> Result<LogicalDataflow, ModelError> {
        if self.version != DATAFLOW_FORMAT_VERSION {
            return Err(ModelError::File(format!("unsupported version {}", self.version)));
        }
        let mut vertices: Vec<VertexDecl> = Vec::with_capacity(self.vertices.len());
        let mut entries = self.vertices;
        entries.sort_by_key(|v| v.id);
        for (i, v) in entries.into_iter().enumerate() {
            if v.id as usize != i {
                return Err(ModelError::File(format!("vertex ids must be 0..n without gaps, found {}", v.id)));
            }
            let mut d = VertexDecl::new(v.id, v.name, v.op);
            if let Some(a) = v.access {
                d.access = a;
            }
            if let Some(s) = v.stateful {
                d.stateful = s;
            }
            d.cancel_trigger = v.cancel_trigger;
            d.region = v.region;
            vertices.push(d);
        }
        let mut edges: Vec<(VertexId, VertexId, bool, u8, PartitionFn)> =
            self.edges.iter().map(|e| (e.src, e.dst, e.backward, e.port, e.partition)).collect();
        let mut members: Vec<BTreeSet<VertexId>> =
            self.scopes.iter().map(|s| s.members.iter().copied().collect()).collect();
        let mut ports: Vec<(Option<VertexId>, Option<VertexId>)> = self.scopes.iter().map(|s| (s.ingress, s.egress)).collect();

        // Innermost scopes first, so outer scopes see inner ports as members.
        let mut order: Vec<usize> = (0..self.scopes.len()).collect();
        order.sort_by_key(|&i| members[i].len());
        for &si in &order {
            let original = members[si].clone();
            let mut full = original.clone();
            full.extend(ports[si].0);
            full.extend(ports[si].1);
            let mut added = Vec::new();
            if ports[si].0.is_none() {
                let ing = vertices.len() as VertexId;
                vertices.push(VertexDecl::new(ing, format!("ingress{si}"), OperatorSpec::Ingress));
                ports[si].0 = Some(ing);
                added.push(ing);
                let mut entry: BTreeMap<VertexId, PartitionFn> = BTreeMap::new();
                for e in edges.iter_mut() {
                    let entering = !e.2 && !full.contains(&e.0) && original.contains(&e.1);
                    let back = e.2 && original.contains(&e.0) && original.contains(&e.1);
                    if entering || back {
                        entry.entry(e.1).or_insert(e.4);
                        e.1 = ing;
                        if entering {
                            e.4 = PartitionFn::ForwardLocal;
                        }
                    }
                }
                for (dst, p) in entry {
                    edges.push((ing, dst, false, 0, p));
                }
            }
            if ports[si].1.is_none() {
                let eg = vertices.len() as VertexId;
                vertices.push(VertexDecl::new(eg, format!("egress{si}"), OperatorSpec::Egress));
                ports[si].1 = Some(eg);
                added.push(eg);
                let mut exit: BTreeMap<VertexId, PartitionFn> = BTreeMap::new();
                for e in edges.iter_mut() {
                    if !e.2 && original.contains(&e.0) && !full.contains(&e.1) && e.1 != ports[si].0.unwrap() {
                        exit.entry(e.1).or_insert(e.4);
                        e.1 = eg;
                        e.4 = PartitionFn::ByTag;
                    }
                }
                for (dst, p) in exit {
                    edges.push((eg, dst, false, 0, p));
                }
            }
            for (oi, m) in members.iter_mut().enumerate() {
                if oi != si && original.is_subset(m) && m.len() > original.len() {
                    m.extend(added.iter().copied());
                }
            }
        }
        // Splicing can duplicate a port edge (e.g. two members feeding the egress from one vertex).
        let mut seen = BTreeSet::new();
        edges.retain(|e| seen.insert(*e));

        let mut scopes = Vec::new();
        for (i, s) in self.scopes.iter().enumerate() {
            let full: BTreeSet<VertexId> =
                members[i].iter().copied().chain([ports[i].0.unwrap(), ports[i].1.unwrap()]).collect();
            let computed = 1 + (0..self.scopes.len())
                .filter(|&j| j != i && full.is_subset(&members[j]))
                .count() as u32;
            scopes.push(ScopeDecl {
                id: i as u32,
                kind: s.kind,
                ingress: ports[i].0.unwrap(),
                egress: ports[i].1.unwrap(),
                internal: members[i].clone(),
                depth: s.depth.unwrap_or(computed),
                max_si: s.max_si,
                inter_si_policy: s.inter_si_policy.clone(),
                intra_si_policy: s.intra_si_policy.clone(),
            });
        }
        let edges = edges
            .into_iter()
            .enumerate()
            .map(|(i, (src, dst, backward, port, partition))| EdgeDecl { id: i as u32, src, dst, backward, port, partition })
            .collect();
        Ok(LogicalDataflow { vertices, edges, scopes, root_intra_policy: self.root_intra_policy })
    }
}

pub fn parse_dataflow(text: &str) -> Result<LogicalDataflow, ModelError> {
    let f: DataflowFile = toml::from_str(text).map_err(|e| ModelError::File(e.to_string()))?;
    f.into_dataflow()
}

pub fn load_dataflow_file(path: &Path) -> Result<LogicalDataflow, ModelError> {
    let text = std::fs::read_to_string(path).map_err(|e| ModelError::File(format!("{}: {e}", path.display())))?;
    parse_dataflow(&text)
}

pub fn to_dataflow_text(df: &LogicalDataflow) -> String {
    toml::to_string(&DataflowFile::from_dataflow(df)).expect("dataflow serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataflow::validate::{tests::loop_fixture, validate_dataflow};

    const LOOP: &str = r#"
version = 1
root_intra_policy = "dfs"

[[vertex]]
id = 0
name = "src"
op = { kind = "source" }

[[vertex]]
id = 1
name = "a"
op = { kind = "expand", dir = "out", label = "knows" }

[[vertex]]
id = 2
name = "b"
op = { kind = "identity" }

[[vertex]]
id = 3
name = "sink"
op = { kind = "sink" }

[[edge]]
src = 0
dst = 1
partition = "by_vertex"

[[edge]]
src = 1
dst = 2

[[edge]]
src = 2
dst = 1
backward = true
port = 1
partition = "by_vertex"

[[edge]]
src = 2
dst = 3
partition = "single"

[[scope]]
kind = "loop"
members = [1, 2]
inter_si_policy = "bfs"
intra_si_policy = "dfs"
"#;

    #[test]
    fn synthesizes_ports() {
        let df = parse_dataflow(LOOP).unwrap();
        let r = validate_dataflow(&df);
        assert!(r.is_ok(), "{r}");
        assert_eq!(df.vertices.len(), 6);
        let s = &df.scopes[0];
        assert_eq!((s.ingress, s.egress, s.depth), (4, 5, 1));
        assert!(df.edges.iter().any(|e| e.src == 2 && e.dst == 4 && e.backward));
        assert!(df.edges.iter().any(|e| e.src == 4 && e.dst == 1 && e.partition == PartitionFn::ByVertex));
        assert!(df.edges.iter().any(|e| e.src == 5 && e.dst == 3 && e.partition == PartitionFn::Single));
    }

    #[test]
    fn round_trips() {
        let df = loop_fixture();
        let text = to_dataflow_text(&df);
        assert_eq!(parse_dataflow(&text).unwrap(), df);
    }

    #[test]
    fn rejects_bad_version() {
        let text = LOOP.replace("version = 1", "version = 7");
        assert!(matches!(parse_dataflow(&text), Err(ModelError::File(_))));
    }

    #[test]
    fn nested_scopes_get_depths() {
        let text = r#"
version = 1
[[vertex]]
id = 0
name = "src"
op = { kind = "source" }
[[vertex]]
id = 1
name = "x"
op = { kind = "identity" }
[[vertex]]
id = 2
name = "y"
op = { kind = "identity" }
[[vertex]]
id = 3
name = "sink"
op = { kind = "sink" }
[[edge]]
src = 0
dst = 1
[[edge]]
src = 1
dst = 2
[[edge]]
src = 2
dst = 1
backward = true
[[edge]]
src = 2
dst = 3
[[scope]]
kind = "loop"
members = [1, 2]
[[scope]]
kind = "branch"
members = [2]
"#;
        let df = parse_dataflow(text).unwrap();
        let r = validate_dataflow(&df);
        assert_eq!(df.scopes[1].depth, 2);
        assert_eq!(df.scopes[0].depth, 1);
        // A backward edge out of a nested scope is not spliced and stays invalid.
        assert!(r.violations.iter().any(|v| matches!(v, crate::dataflow::Violation::BackwardSourceNotDirect { .. })), "{r}");
        assert_eq!(r.violations.len(), 1, "{r}");
    }
}
