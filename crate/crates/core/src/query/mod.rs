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

//! Traversal queries: the step IR, compilation to scoped dataflows,
//! parallelization, execution and an independent reference evaluator.

mod compile;
mod exec;
mod ir;
mod oracle;
mod plan;
mod presets;

pub use compile::compile;
pub use exec::{execute, prepare, source_ids, CompileOptions};
pub use ir::{Arg, Params, QueryIR, SetDecl, Step};
pub use oracle::{check_results, oracle_eval, unlimited};
pub use plan::{parallelize, PhysicalPlan, VertexPlan, EXTERNAL_EDGE};
pub use presets::{preset, PRESETS};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QueryError {
    #[error("invalid query: {0}")]
    Invalid(String),
    #[error("missing parameter `{0}`")]
    MissingParam(String),
    #[error("compile error: {0}")]
    Compile(String),
    #[error("query file: {0}")]
    File(String),
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
}
