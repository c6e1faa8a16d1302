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

use std::collections::BTreeMap;

use serde::Serialize;

use crate::dataflow::VertexId;
use crate::graph::{ExecId, TabletId};

/// Work done for one query, summed over executors.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct QueryStats {
    pub data_processed: u64,
    /// EOS, reports and other control items taken from mailboxes.
    pub control_processed: u64,
    /// DATA messages ignored because of termination or cancellation.
    pub dropped: u64,
    /// Queued items thrown away with terminated operators.
    pub discarded: u64,
    pub messages_sent: u64,
    pub ops_created: u64,
    pub scope_ops_created: u64,
    pub eos_skipped: u64,
    pub sis_created: u64,
    pub per_vertex: BTreeMap<VertexId, u64>,
    pub per_region: BTreeMap<u32, u64>,
    pub per_exec: BTreeMap<ExecId, u64>,
}

impl QueryStats {
    pub fn processed(&self) -> u64 {
        self.data_processed + self.control_processed
    }

    pub fn region(&self, r: u32) -> u64 {
        self.per_region.get(&r).copied().unwrap_or(0)
    }

    pub fn merge(&mut self, o: &QueryStats) {
        self.data_processed += o.data_processed;
        self.control_processed += o.control_processed;
        self.dropped += o.dropped;
        self.discarded += o.discarded;
        self.messages_sent += o.messages_sent;
        self.ops_created += o.ops_created;
        self.scope_ops_created += o.scope_ops_created;
        self.eos_skipped += o.eos_skipped;
        self.sis_created += o.sis_created;
        for (k, v) in &o.per_vertex {
            *self.per_vertex.entry(*k).or_default() += v;
        }
        for (k, v) in &o.per_region {
            *self.per_region.entry(*k).or_default() += v;
        }
        for (k, v) in &o.per_exec {
            *self.per_exec.entry(*k).or_default() += v;
        }
    }
}

/// Cumulative load of one executor, over all queries.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct LoadCounters {
    pub processed: u64,
    /// Items processed by graph-accessing operators, per tablet.
    pub per_tablet: BTreeMap<TabletId, u64>,
    /// Items queued when the last quantum ended.
    pub backlog: u64,
}

impl LoadCounters {
    pub fn graph_processed(&self) -> u64 {
        self.per_tablet.values().sum()
    }
}
