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

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::dataflow::{EdgeId, ScopeId, ScopeTag, VertexId};
use crate::graph::Vid;
use crate::query::PhysicalPlan;

use super::QueryShared;

pub type QueryId = u32;

/// A traversal position plus what enclosing where-branches need to resume:
/// the outer vertices and (without scopes) the traversal ids to check for
/// cancellation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Traverser {
    pub vertex: Vid,
    pub outer: SmallVec<[Vid; 2]>,
    pub travs: SmallVec<[u64; 2]>,
}

impl Traverser {
    pub fn at(vertex: Vid) -> Traverser {
        Traverser { vertex, outer: SmallVec::new(), travs: SmallVec::new() }
    }

    pub fn moved(&self, vertex: Vid) -> Traverser {
        Traverser { vertex, outer: self.outer.clone(), travs: self.travs.clone() }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Payload {
    Trav(Traverser),
    Count(u64),
}

impl Payload {
    pub fn vertex(&self) -> Option<Vid> {
        match self {
            Payload::Trav(t) => Some(t.vertex),
            Payload::Count(_) => None,
        }
    }
}

/// One query result.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Value {
    Vertex(Vid),
    Count(u64),
}

/// Progress reports exchanged between scope ports.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Report {
    /// Branch ingress `from` instantiated `count` ordinals of its stride.
    Branch { from: u32, count: u32 },
    /// Loop ingress `from` routed `count` messages into iteration `k`.
    Iteration { k: u32, from: u32, count: u64 },
}

/// Where an EOS goes on the destination executor.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EosTarget {
    /// Every local operator of the vertex.
    AllLocal,
    Part(u32),
}

#[derive(Clone, Debug)]
pub enum Envelope {
    Install { query: QueryId, plan: Arc<PhysicalPlan>, shared: Arc<QueryShared> },
    Data { query: QueryId, vertex: VertexId, part: u32, edge: EdgeId, tag: ScopeTag, payload: Payload },
    Eos { query: QueryId, vertex: VertexId, target: EosTarget, edge: EdgeId, tag: ScopeTag, weight: u32 },
    /// To a scope port operator; `tag` is the port operator's tag.
    Report { query: QueryId, vertex: VertexId, part: u32, tag: ScopeTag, report: Report },
    /// Branch instance `tag` was cancelled; to its egress operator.
    SiTerminated { query: QueryId, vertex: VertexId, part: u32, tag: ScopeTag },
    /// Branch instance `tag` finished; releases its Max_SI slot.
    SiComplete { query: QueryId, scope: ScopeId, tag: ScopeTag },
    TerminateSi { query: QueryId, scope: ScopeId, tag: ScopeTag },
    TerminateQuery { query: QueryId },
    Cancel { query: QueryId, trav: u64 },
}

impl Envelope {
    pub fn query(&self) -> QueryId {
        match self {
            Envelope::Install { query, .. }
            | Envelope::Data { query, .. }
            | Envelope::Eos { query, .. }
            | Envelope::Report { query, .. }
            | Envelope::SiTerminated { query, .. }
            | Envelope::SiComplete { query, .. }
            | Envelope::TerminateSi { query, .. }
            | Envelope::TerminateQuery { query }
            | Envelope::Cancel { query, .. } => *query,
        }
    }
}

/// Mailbox entry of one operator.
#[derive(Clone, Debug)]
pub enum Item {
    Data { edge: EdgeId, tag: ScopeTag, payload: Payload },
    Eos { edge: EdgeId, tag: ScopeTag, weight: u32 },
    Report(Report),
    SiTerminated(u32),
    /// Max_SI capacity became available.
    Wake,
}

impl Item {
    pub fn is_data(&self) -> bool {
        matches!(self, Item::Data { .. })
    }
}
