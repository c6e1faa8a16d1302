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

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::graph::{Direction, VertexPredicate};

pub type VertexId = u32;
pub type EdgeId = u32;
pub type ScopeId = u32;

/// Current on-disk format version of dataflow description files.
pub const DATAFLOW_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Access {
    /// Reads graph data; parallelized one operator per tablet.
    GraphAccessing,
    Pure,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScopeKind {
    Branch,
    Loop,
}

/// How a loop-tail decides that a traverser leaves the loop.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LoopExit {
    /// Leave after exactly `times` iterations.
    Times { times: u32 },
    /// Leave once `cond` holds; traversers still looping after `max_loops`
    /// iterations are discarded.
    Until { cond: VertexPredicate, max_loops: Option<u32> },
}

impl LoopExit {
    /// Iteration bound, when the loop has one.
    pub fn bound(&self) -> Option<u32> {
        match self {
            LoopExit::Times { times } => Some(*times),
            LoopExit::Until { max_loops, .. } => *max_loops,
        }
    }
}

/// Vertex logic, selected from the built-in operator library.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OperatorSpec {
    /// System vertex: routes entering messages into scope instances.
    Ingress,
    /// System vertex: strips the instance ordinal off leaving messages.
    Egress,
    /// Emits the query's start vertices.
    Source,
    Expand { dir: Direction, label: String },
    Filter { pred: VertexPredicate },
    /// End of a loop body. Port 0 leaves the loop, port 1 continues it.
    /// `iteration` is fixed for unrolled loops; otherwise it is read from
    /// the scope tag.
    LoopTail { exit: LoopExit, emit: Option<VertexPredicate>, iteration: Option<u32> },
    Identity,
    /// Opens a tracked traversal for an untagged where-subquery.
    WhereEnter,
    /// Closes an untagged where-subquery: passes each traversal's outer
    /// element once, optionally cancelling the rest of that traversal.
    WhereExit { cancellable: bool },
    Dedup,
    Count,
    /// Collects query results; reaching `limit` completes the whole query.
    Sink { limit: Option<u64> },
}

impl OperatorSpec {
    pub fn is_system(&self) -> bool {
        matches!(self, OperatorSpec::Ingress | OperatorSpec::Egress)
    }

    /// Operators that must observe completion even without input.
    pub fn completes_eagerly(&self) -> bool {
        matches!(self, OperatorSpec::Ingress | OperatorSpec::Egress | OperatorSpec::Count | OperatorSpec::Sink { .. })
    }

    pub fn default_access(&self) -> Access {
        match self {
            OperatorSpec::Source | OperatorSpec::Expand { .. } | OperatorSpec::Filter { .. } => Access::GraphAccessing,
            OperatorSpec::LoopTail { exit, emit, .. } => {
                let reads = matches!(exit, LoopExit::Until { .. }) || emit.is_some();
                if reads {
                    Access::GraphAccessing
                } else {
                    Access::Pure
                }
            }
            _ => Access::Pure,
        }
    }

    /// Whether one single operator instance must see all of the vertex's input.
    pub fn is_singleton(&self) -> bool {
        matches!(self, OperatorSpec::Dedup | OperatorSpec::Count | OperatorSpec::Sink { .. })
    }
}

/// Edge partitioning functions between parallel operators.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionFn {
    /// To the operator of the tablet owning the traverser's current vertex.
    ByVertex,
    /// To an operator on the sending executor when one exists.
    ForwardLocal,
    /// To the single operator of the target.
    Single,
    /// By hash of the message's scope instance (egress targets).
    ByTag,
    /// By hash of the innermost tracked traversal (untagged where-exit).
    ByTraversal,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VertexDecl {
    pub id: VertexId,
    pub name: String,
    pub op: OperatorSpec,
    pub access: Access,
    /// Keeps per-instance state initialized to a default when created.
    #[serde(default)]
    pub stateful: bool,
    /// Completing after the first output terminates the enclosing branch
    /// scope instance.
    #[serde(default)]
    pub cancel_trigger: bool,
    /// Accounting label (e.g. which where-subquery a vertex belongs to).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<u32>,
}

impl VertexDecl {
    pub fn new(id: VertexId, name: impl Into<String>, op: OperatorSpec) -> VertexDecl {
        let access = op.default_access();
        let stateful = matches!(
            op,
            OperatorSpec::Dedup | OperatorSpec::Count | OperatorSpec::Sink { .. } | OperatorSpec::WhereExit { .. }
        );
        VertexDecl { id, name: name.into(), op, access, stateful, cancel_trigger: false, region: None }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeDecl {
    pub id: EdgeId,
    pub src: VertexId,
    pub dst: VertexId,
    #[serde(default)]
    pub backward: bool,
    /// Output port of `src` feeding this edge.
    #[serde(default)]
    pub port: u8,
    pub partition: PartitionFn,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScopeDecl {
    pub id: ScopeId,
    pub kind: ScopeKind,
    pub ingress: VertexId,
    pub egress: VertexId,
    /// Every vertex inside the scope other than its own ports, including
    /// vertices and ports of nested scopes.
    pub internal: BTreeSet<VertexId>,
    pub depth: u32,
    /// Concurrent instances allowed per executor; `None` is unlimited.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_si: Option<u32>,
    pub inter_si_policy: String,
    pub intra_si_policy: String,
}

impl ScopeDecl {
    pub fn contains(&self, v: VertexId) -> bool {
        self.internal.contains(&v)
    }

    /// Internal vertices plus both ports.
    pub fn full(&self) -> BTreeSet<VertexId> {
        let mut s = self.internal.clone();
        s.insert(self.ingress);
        s.insert(self.egress);
        s
    }
}

/// Directed graph of vertices with well-nested branch and loop scopes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogicalDataflow {
    pub vertices: Vec<VertexDecl>,
    pub edges: Vec<EdgeDecl>,
    pub scopes: Vec<ScopeDecl>,
    /// Intra-instance policy of the top level (the query's root scope).
    pub root_intra_policy: String,
}

impl LogicalDataflow {
    pub fn vertex(&self, v: VertexId) -> &VertexDecl {
        &self.vertices[v as usize]
    }

    pub fn scope(&self, s: ScopeId) -> &ScopeDecl {
        &self.scopes[s as usize]
    }

    pub fn edge(&self, e: EdgeId) -> &EdgeDecl {
        &self.edges[e as usize]
    }

    pub fn add_vertex(&mut self, name: impl Into<String>, op: OperatorSpec) -> VertexId {
        let id = self.vertices.len() as VertexId;
        self.vertices.push(VertexDecl::new(id, name, op));
        id
    }

    pub fn add_edge(&mut self, src: VertexId, dst: VertexId, port: u8, backward: bool, partition: PartitionFn) -> EdgeId {
        let id = self.edges.len() as EdgeId;
        self.edges.push(EdgeDecl { id, src, dst, backward, port, partition });
        id
    }
}
