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
use std::fmt;

use serde::{Deserialize, Serialize};

use super::schema::GraphSchema;
use super::value::PropValue;
use super::GraphError;

/// Dense engine-internal vertex index.
pub type Vid = u32;
/// Interned edge label.
pub type LabelId = u16;

/// External identity of a vertex: its type and its id within that type.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VertexRef {
    pub vtype: u16,
    pub id: i64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Out,
    In,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Out => "out",
            Direction::In => "in",
        })
    }
}

#[derive(Clone, Debug)]
pub struct EdgeRecord {
    pub src: Vid,
    pub dst: Vid,
    pub label: LabelId,
    pub props: Vec<PropValue>,
}

/// Immutable in-memory property graph with a primary id index per vertex type.
#[derive(Debug)]
pub struct PropertyGraph {
    schema: GraphSchema,
    vertex_type: Vec<u16>,
    vertex_id: Vec<i64>,
    vertex_props: Vec<Vec<PropValue>>,
    index: Vec<HashMap<i64, Vid>>,
    labels: Vec<String>,
    label_index: HashMap<String, LabelId>,
    edges: Vec<EdgeRecord>,
    prop_pos: Vec<HashMap<String, usize>>,
}

impl PropertyGraph {
    pub fn schema(&self) -> &GraphSchema {
        &self.schema
    }

    pub fn num_vertices(&self) -> usize {
        self.vertex_type.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[EdgeRecord] {
        &self.edges
    }

    pub fn edge(&self, idx: u32) -> &EdgeRecord {
        &self.edges[idx as usize]
    }

    pub fn vertex_ref(&self, v: Vid) -> VertexRef {
        VertexRef { vtype: self.vertex_type[v as usize], id: self.vertex_id[v as usize] }
    }

    pub fn vertex_type_name(&self, v: Vid) -> &str {
        &self.schema.vertices[self.vertex_type[v as usize] as usize].name
    }

    pub fn type_id(&self, name: &str) -> Option<u16> {
        self.schema.vertex_type(name).map(|t| t as u16)
    }

    pub fn lookup(&self, r: VertexRef) -> Option<Vid> {
        self.index.get(r.vtype as usize)?.get(&r.id).copied()
    }

    pub fn lookup_named(&self, vtype: &str, id: i64) -> Option<Vid> {
        let t = self.type_id(vtype)?;
        self.lookup(VertexRef { vtype: t, id })
    }

    pub fn label_id(&self, label: &str) -> Option<LabelId> {
        self.label_index.get(label).copied()
    }

    pub fn label_name(&self, l: LabelId) -> &str {
        &self.labels[l as usize]
    }

    pub fn props(&self, v: Vid) -> &[PropValue] {
        &self.vertex_props[v as usize]
    }

    /// Looks a property up by name on vertex `v`.
    pub fn prop(&self, v: Vid, key: &str) -> Option<&PropValue> {
        let t = self.vertex_type[v as usize] as usize;
        let pos = *self.prop_pos[t].get(key)?;
        self.vertex_props[v as usize].get(pos)
    }

    /// Vertices of one type in id order.
    pub fn vertices_of(&self, vtype: u16) -> Vec<Vid> {
        let mut v: Vec<(i64, Vid)> =
            self.index[vtype as usize].iter().map(|(id, vid)| (*id, *vid)).collect();
        v.sort_unstable();
        v.into_iter().map(|(_, vid)| vid).collect()
    }

    /// Vertex counts per declared type.
    pub fn counts_per_type(&self) -> Vec<(String, usize)> {
        self.schema
            .vertices
            .iter()
            .enumerate()
            .map(|(i, t)| (t.name.clone(), self.index[i].len()))
            .collect()
    }

    /// Edge counts per label.
    pub fn counts_per_label(&self) -> Vec<(String, usize)> {
        let mut counts = vec![0usize; self.labels.len()];
        for e in &self.edges {
            counts[e.label as usize] += 1;
        }
        self.labels.iter().cloned().zip(counts).collect()
    }
}

/// Incrementally assembles a [`PropertyGraph`], enforcing id uniqueness and
/// referential integrity.
pub struct GraphBuilder {
    graph: PropertyGraph,
}

impl GraphBuilder {
    pub fn new(schema: GraphSchema) -> GraphBuilder {
        let mut labels = Vec::new();
        let mut label_index = HashMap::new();
        for e in &schema.edges {
            if !label_index.contains_key(&e.label) {
                label_index.insert(e.label.clone(), labels.len() as LabelId);
                labels.push(e.label.clone());
            }
        }
        let prop_pos = schema
            .vertices
            .iter()
            .map(|t| t.properties.iter().enumerate().map(|(i, p)| (p.name.clone(), i)).collect())
            .collect();
        let index = vec![HashMap::new(); schema.vertices.len()];
        GraphBuilder {
            graph: PropertyGraph {
                schema,
                vertex_type: Vec::new(),
                vertex_id: Vec::new(),
                vertex_props: Vec::new(),
                index,
                labels,
                label_index,
                edges: Vec::new(),
                prop_pos,
            },
        }
    }

    pub fn schema(&self) -> &GraphSchema {
        &self.graph.schema
    }

    pub fn add_vertex(&mut self, vtype: &str, id: i64, props: Vec<PropValue>) -> Result<Vid, GraphError> {
        let t = self
            .graph
            .schema
            .vertex_type(vtype)
            .ok_or_else(|| GraphError::Schema(format!("unknown vertex type {vtype}")))?;
        let expected = self.graph.schema.vertices[t].properties.len();
        if props.len() != expected {
            return Err(GraphError::Schema(format!(
                "vertex {vtype}:{id} has {} properties, schema declares {expected}",
                props.len()
            )));
        }
        if self.graph.index[t].contains_key(&id) {
            return Err(GraphError::DuplicateVertex { vtype: vtype.to_string(), id });
        }
        let vid = self.graph.vertex_type.len() as Vid;
        self.graph.index[t].insert(id, vid);
        self.graph.vertex_type.push(t as u16);
        self.graph.vertex_id.push(id);
        self.graph.vertex_props.push(props);
        Ok(vid)
    }

    pub fn vertex(&self, vtype: &str, id: i64) -> Option<Vid> {
        self.graph.lookup_named(vtype, id)
    }

    pub fn add_edge(&mut self, label: &str, src: Vid, dst: Vid, props: Vec<PropValue>) -> Result<(), GraphError> {
        let l = self
            .graph
            .label_id(label)
            .ok_or_else(|| GraphError::Schema(format!("unknown edge label {label}")))?;
        let n = self.graph.num_vertices() as Vid;
        if src >= n || dst >= n {
            return Err(GraphError::Schema(format!("edge {label} references unknown vertex")));
        }
        self.graph.edges.push(EdgeRecord { src, dst, label: l, props });
        Ok(())
    }

    /// Adds an edge between vertices named by (type, id).
    pub fn add_edge_named(
        &mut self,
        label: &str,
        src: (&str, i64),
        dst: (&str, i64),
        props: Vec<PropValue>,
    ) -> Result<(), GraphError> {
        let s = self.vertex(src.0, src.1).ok_or_else(|| GraphError::DanglingEndpoint {
            location: format!("edge {label}"),
            vtype: src.0.to_string(),
            id: src.1,
        })?;
        let d = self.vertex(dst.0, dst.1).ok_or_else(|| GraphError::DanglingEndpoint {
            location: format!("edge {label}"),
            vtype: dst.0.to_string(),
            id: dst.1,
        })?;
        self.add_edge(label, s, d, props)
    }

    pub fn finish(self) -> PropertyGraph {
        self.graph
    }
}
