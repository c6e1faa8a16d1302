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

//! Executors running parallelized dataflows: per-executor operator trees,
//! dynamic operator creation and termination, hierarchical quota scheduling
//! and message delivery between executors.

mod address;
mod audit;
mod engine;
mod executor;
mod logic;
mod message;
mod quota;
mod stats;
mod trace;

use std::sync::atomic::{AtomicBool, AtomicI64, AtomicU64, Ordering};
use std::sync::Mutex;

use serde::Serialize;

pub use address::{Chain, OpAddr};
pub use audit::{audit_trace, AuditReport};
pub use engine::{Engine, EngineConfig, Mode, ThreadedEngine};
pub use executor::{Executor, QuantumReport};
pub use message::{Envelope, EosTarget, Item, Payload, QueryId, Report, Traverser, Value};
pub use quota::{assign_quota, QuotaPolicy};
pub use stats::{LoadCounters, QueryStats};
pub use trace::{EventKind, TraceEvent};

/// How a query ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Status {
    Completed,
    Timeout,
    Fault,
}

/// State of one query visible to every executor and to the driver.
#[derive(Debug)]
pub struct QueryShared {
    pub id: QueryId,
    in_flight: AtomicI64,
    done: AtomicBool,
    timed_out: AtomicBool,
    submitted: u64,
    completion: AtomicU64,
    results: Mutex<Vec<Value>>,
    stats: Mutex<QueryStats>,
    faults: Mutex<Vec<String>>,
}

impl QueryShared {
    pub fn new(id: QueryId, submitted: u64) -> QueryShared {
        QueryShared {
            id,
            in_flight: AtomicI64::new(0),
            done: AtomicBool::new(false),
            timed_out: AtomicBool::new(false),
            submitted,
            completion: AtomicU64::new(u64::MAX),
            results: Mutex::new(Vec::new()),
            stats: Mutex::new(QueryStats::default()),
            faults: Mutex::new(Vec::new()),
        }
    }

    pub(crate) fn add_in_flight(&self, d: i64) {
        self.in_flight.fetch_add(d, Ordering::AcqRel);
    }

    /// Messages and mailbox items not yet handled.
    pub fn in_flight(&self) -> i64 {
        self.in_flight.load(Ordering::Acquire)
    }

    /// Tick (or microsecond) of submission.
    pub fn submitted(&self) -> u64 {
        self.submitted
    }

    pub fn is_done(&self) -> bool {
        self.done.load(Ordering::Acquire)
    }

    /// Done and quiescent.
    pub fn is_finished(&self) -> bool {
        self.is_done() && self.in_flight() == 0
    }

    /// Marks completion at `tick`; returns false if already done.
    pub(crate) fn finish(&self, tick: u64) -> bool {
        if self.done.swap(true, Ordering::AcqRel) {
            return false;
        }
        self.completion.store(tick, Ordering::Release);
        true
    }

    pub(crate) fn time_out(&self, tick: u64) -> bool {
        self.timed_out.store(true, Ordering::Release);
        self.finish(tick)
    }

    pub(crate) fn push_result(&self, v: Value) -> usize {
        let mut r = self.results.lock().expect("results lock");
        r.push(v);
        r.len()
    }

    pub(crate) fn merge_stats(&self, s: &QueryStats) {
        self.stats.lock().expect("stats lock").merge(s);
    }

    pub(crate) fn fault(&self, msg: String) {
        self.faults.lock().expect("faults lock").push(msg);
    }

    pub fn outcome(&self) -> QueryOutcome {
        let faults = self.faults.lock().expect("faults lock").clone();
        let status = if !faults.is_empty() {
            Status::Fault
        } else if self.timed_out.load(Ordering::Acquire) {
            Status::Timeout
        } else {
            Status::Completed
        };
        let completion = self.completion.load(Ordering::Acquire);
        QueryOutcome {
            id: self.id,
            status,
            results: self.results.lock().expect("results lock").clone(),
            stats: self.stats.lock().expect("stats lock").clone(),
            submitted: self.submitted,
            completion_tick: (completion != u64::MAX).then_some(completion),
            faults,
        }
    }
}

/// Final view of one query.
#[derive(Clone, Debug, Serialize)]
pub struct QueryOutcome {
    pub id: QueryId,
    pub status: Status,
    pub results: Vec<Value>,
    pub stats: QueryStats,
    pub submitted: u64,
    pub completion_tick: Option<u64>,
    pub faults: Vec<String>,
}

impl QueryOutcome {
    /// Ticks from submission to completion.
    pub fn latency(&self) -> Option<u64> {
        self.completion_tick.map(|c| c - self.submitted)
    }
}
