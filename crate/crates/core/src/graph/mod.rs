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

//! Tablet-partitioned in-memory property graph.
//!
//! A [`PropertyGraph`] is immutable once loaded. [`partition`] splits it into
//! [`Tablet`]s, each holding an exclusive vertex set together with every in
//! and out edge of those vertices, and a [`RoutingTable`] maps tablets to the
//! executors that own them.

mod csv_io;
pub mod generate;
mod predicate;
mod schema;
mod store;
mod tablet;
mod value;

use thiserror::Error;

pub use csv_io::{load_csv, load_with_schema, write_csv, LoadSummary};
pub use generate::{generate, GenSpec};
pub use predicate::{Cmp, ConstSets, NeighborTarget, VertexPredicate};
pub use schema::{EdgeTypeDef, GraphSchema, PropertyDef, VertexTypeDef};
pub use store::{Direction, EdgeRecord, GraphBuilder, LabelId, PropertyGraph, VertexRef, Vid};
pub use tablet::{
    mix64, partition, vertex_hash, AdjEntry, ExecId, PartitionedGraph, RoutingHandle, RoutingTable, Tablet, TabletId,
};
pub use value::{PropType, PropValue};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("{location}: {message}")]
    Parse { location: String, message: String },
    #[error("{location}: edge endpoint {vtype}:{id} does not exist")]
    DanglingEndpoint { location: String, vtype: String, id: i64 },
    #[error("duplicate vertex id {vtype}:{id}")]
    DuplicateVertex { vtype: String, id: i64 },
    #[error("routing fault: vertex {vertex} is not owned by tablet {tablet}")]
    RoutingFault { tablet: TabletId, vertex: Vid },
}
