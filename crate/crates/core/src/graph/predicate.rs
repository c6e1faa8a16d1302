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

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::store::{Direction, PropertyGraph, Vid};
use super::tablet::Tablet;
use super::value::PropValue;
use super::GraphError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cmp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    /// Substring test on string properties.
    Contains,
}

impl Cmp {
    pub fn holds(self, lhs: &PropValue, rhs: &PropValue) -> bool {
        match self {
            Cmp::Eq => lhs == rhs,
            Cmp::Ne => lhs != rhs,
            Cmp::Lt => same_kind(lhs, rhs) && lhs < rhs,
            Cmp::Le => same_kind(lhs, rhs) && lhs <= rhs,
            Cmp::Gt => same_kind(lhs, rhs) && lhs > rhs,
            Cmp::Ge => same_kind(lhs, rhs) && lhs >= rhs,
            Cmp::Contains => match (lhs, rhs) {
                (PropValue::Str(a), PropValue::Str(b)) => a.contains(b.as_str()),
                _ => false,
            },
        }
    }
}

fn same_kind(a: &PropValue, b: &PropValue) -> bool {
    std::mem::discriminant(a) == std::mem::discriminant(b)
}

/// What a neighbor must be for [`VertexPredicate::HasNeighbor`] to hold.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NeighborTarget {
    Any,
    Vertex { vtype: String, id: i64 },
    /// Member of a query-scoped constant set.
    InSet { set: String },
}

/// A predicate over the current vertex, evaluated on the tablet that owns it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VertexPredicate {
    True,
    HasType { vtype: String },
    Prop { key: String, cmp: Cmp, value: PropValue },
    HasNeighbor { dir: Direction, label: String, target: NeighborTarget },
    And { all: Vec<VertexPredicate> },
    Or { any: Vec<VertexPredicate> },
    Not { inner: Box<VertexPredicate> },
}

/// Constant vertex sets bound for one query execution.
pub type ConstSets = BTreeMap<String, BTreeSet<Vid>>;

impl VertexPredicate {
    pub fn prop(key: &str, cmp: Cmp, value: PropValue) -> VertexPredicate {
        VertexPredicate::Prop { key: key.to_string(), cmp, value }
    }

    pub fn has_neighbor(dir: Direction, label: &str, target: NeighborTarget) -> VertexPredicate {
        VertexPredicate::HasNeighbor { dir, label: label.to_string(), target }
    }

    /// True when evaluation reads adjacency (not only the vertex's own properties).
    pub fn reads_adjacency(&self) -> bool {
        match self {
            VertexPredicate::HasNeighbor { .. } => true,
            VertexPredicate::And { all } => all.iter().any(|p| p.reads_adjacency()),
            VertexPredicate::Or { any } => any.iter().any(|p| p.reads_adjacency()),
            VertexPredicate::Not { inner } => inner.reads_adjacency(),
            _ => false,
        }
    }

    /// Evaluates on vertex `v`, which `tablet` must own.
    pub fn eval(&self, graph: &PropertyGraph, tablet: &Tablet, v: Vid, sets: &ConstSets) -> Result<bool, GraphError> {
        Ok(match self {
            VertexPredicate::True => true,
            VertexPredicate::HasType { vtype } => {
                tablet.props(graph, v)?;
                graph.vertex_type_name(v) == vtype
            }
            VertexPredicate::Prop { key, cmp, value } => {
                tablet.props(graph, v)?;
                graph.prop(v, key).is_some_and(|p| cmp.holds(p, value))
            }
            VertexPredicate::HasNeighbor { dir, label, target } => {
                let Some(l) = graph.label_id(label) else {
                    tablet.adjacency(v, *dir)?;
                    return Ok(false);
                };
                let wanted = match target {
                    NeighborTarget::Vertex { vtype, id } => match graph.lookup_named(vtype, *id) {
                        Some(w) => Some(w),
                        None => return Ok(false),
                    },
                    _ => None,
                };
                let set = match target {
                    NeighborTarget::InSet { set } => sets.get(set),
                    _ => None,
                };
                tablet.adjacency(v, *dir)?.iter().filter(|a| a.label == l).any(|a| match target {
                    NeighborTarget::Any => true,
                    NeighborTarget::Vertex { .. } => Some(a.neighbor) == wanted,
                    NeighborTarget::InSet { .. } => set.is_some_and(|s| s.contains(&a.neighbor)),
                })
            }
            VertexPredicate::And { all } => {
                for p in all {
                    if !p.eval(graph, tablet, v, sets)? {
                        return Ok(false);
                    }
                }
                true
            }
            VertexPredicate::Or { any } => {
                for p in any {
                    if p.eval(graph, tablet, v, sets)? {
                        return Ok(true);
                    }
                }
                false
            }
            VertexPredicate::Not { inner } => !inner.eval(graph, tablet, v, sets)?,
        })
    }
}
