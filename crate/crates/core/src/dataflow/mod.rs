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

//! The logical scoped dataflow model: graphs with branch and loop scopes,
//! scope tags, instance routing and scheduling priorities. Nothing here holds
//! runtime state.

mod file;
mod model;
mod policy;
mod route;
mod schedule;
mod tag;
pub(crate) mod validate;

use thiserror::Error;

pub use file::{load_dataflow_file, parse_dataflow, to_dataflow_text, DataflowFile, EdgeEntry, ScopeEntry, VertexEntry};
pub use model::{
    Access, EdgeDecl, EdgeId, LogicalDataflow, LoopExit, OperatorSpec, PartitionFn, ScopeDecl, ScopeId, ScopeKind,
    VertexDecl, VertexId, DATAFLOW_FORMAT_VERSION,
};
pub use policy::{InterSiFn, IntraNode, IntraSiFn, Policy, PolicyRegistry};
pub use route::{ingress_route, BranchAllocator, IngressState, Routed};
pub use schedule::{schedule_compare, Scheduler};
pub use tag::{egress_strip, ScopeTag, MAX_SCOPE_DEPTH};
pub use validate::{validate_dataflow, Topology, ValidationReport, Violation};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("scope tag depth {0} exceeds the maximum of {MAX_SCOPE_DEPTH}")]
    TooDeep(usize),
    #[error("scope tag elements must be positive")]
    ZeroOrdinal,
    #[error("cannot strip the last element of an empty scope tag")]
    StripEmptyTag,
    #[error("backward entry into branch scope {0}")]
    BackwardEntryOnBranch(ScopeId),
    #[error("tag {tag} has the wrong depth for entering scope {scope}")]
    TagDepth { scope: ScopeId, tag: String },
    #[error("unknown policy {0:?}")]
    UnknownPolicy(String),
    #[error("invalid dataflow: {0}")]
    Invalid(String),
    #[error("dataflow file: {0}")]
    File(String),
}
