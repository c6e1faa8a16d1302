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

//! EOS-based completion detection.
//!
//! The types here are plain state machines owned by the executor that hosts
//! the corresponding operator; they never send messages themselves. EOS
//! messages carry a weight: the number of upstream operators they speak for.

mod branch;
mod ledger;
mod looping;
mod skip;

use thiserror::Error;

use crate::dataflow::EdgeId;

pub use branch::{branch_scope_progress, BranchEgressProgress, ScopeDecision, SiCountReport};
pub use ledger::{EosAction, EosLedger};
pub use looping::{loop_scope_progress, IterationOutcome, IterationReports, LoopEgressProgress};
pub use skip::{eos_skip, SkipOutcome, SkipTracker};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProgressError {
    #[error("duplicate EOS on edge {edge}: {got} exceeds expected {expected}")]
    DuplicateEos { edge: EdgeId, got: u32, expected: u32 },
    #[error("EOS on undeclared edge {0}")]
    UnknownEdge(EdgeId),
    #[error("report from unknown ingress index {index} (of {parts})")]
    UnknownIngress { index: u32, parts: u32 },
    #[error("duplicate report from ingress {0}")]
    DuplicateReport(u32),
}
