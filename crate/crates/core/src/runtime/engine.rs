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
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use crossbeam_channel::{unbounded, RecvTimeoutError, Sender};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataflow::ScopeTag;
use crate::graph::ExecId;
use crate::query::{PhysicalPlan, EXTERNAL_EDGE};

use super::executor::{Executor, QuantumReport};
use super::message::{Envelope, EosTarget, Payload, QueryId, Traverser};
use super::stats::LoadCounters;
use super::trace::{EventKind, TraceEvent};
use super::{QueryOutcome, QueryShared};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// One driver steps the executors in turn; quota counts messages.
    Deterministic,
    /// One thread per executor; quota counts microseconds.
    Threaded,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub executors: u32,
    /// Messages (deterministic) or microseconds (threaded) per quantum.
    pub quota: u64,
    pub batch_size: usize,
    pub seed: u64,
    /// Step executors in a seeded random order each round instead of 0..N.
    pub shuffle: bool,
    pub trace: bool,
    /// Deterministic-mode timeout in ticks.
    pub timeout_ticks: u64,
    /// Threaded-mode timeout.
    pub timeout_ms: u64,
}

impl Default for EngineConfig {
    fn default() -> EngineConfig {
        EngineConfig {
            executors: 1,
            quota: 64,
            batch_size: 256,
            seed: 0,
            shuffle: false,
            trace: false,
            timeout_ticks: 200_000_000,
            timeout_ms: 60_000,
        }
    }
}

/// The messages that start a query: its start vertices, then one EOS per
/// executor hosting the source.
fn start_messages(q: QueryId, plan: &PhysicalPlan) -> Vec<(ExecId, Envelope)> {
    let src = plan.source;
    let mut out = Vec::new();
    for &v in &plan.start {
        let part = plan.graph.route(v);
        let env = Envelope::Data {
            query: q,
            vertex: src,
            part,
            edge: EXTERNAL_EDGE,
            tag: ScopeTag::root(),
            payload: Payload::Trav(Traverser::at(v)),
        };
        out.push((plan.exec_of(src, part), env));
    }
    for &x in &plan.vertex(src).hosts {
        let env = Envelope::Eos {
            query: q,
            vertex: src,
            target: EosTarget::AllLocal,
            edge: EXTERNAL_EDGE,
            tag: ScopeTag::root(),
            weight: 1,
        };
        out.push((x, env));
    }
    out
}

/// Single-driver engine: every round steps each executor through one
/// quantum and hands its output batches to their destinations.
pub struct Engine {
    cfg: EngineConfig,
    execs: Vec<Executor>,
    queries: BTreeMap<QueryId, Arc<QueryShared>>,
    next: QueryId,
    round: u64,
    rng: ChaCha8Rng,
    trace: Vec<TraceEvent>,
    last_round: Vec<QuantumReport>,
}

impl Engine {
    pub fn new(cfg: EngineConfig) -> Engine {
        let n = cfg.executors.max(1);
        let execs = (0..n).map(|i| Executor::new(i, n, cfg.quota, cfg.batch_size, cfg.trace)).collect();
        Engine {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            cfg,
            execs,
            queries: BTreeMap::new(),
            next: 0,
            round: 0,
            trace: Vec::new(),
            last_round: Vec::new(),
        }
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn num_executors(&self) -> u32 {
        self.execs.len() as u32
    }

    /// Current tick: the start of the next quantum.
    pub fn now(&self) -> u64 {
        self.round * self.cfg.quota
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn submit(&mut self, plan: Arc<PhysicalPlan>) -> QueryId {
        assert_eq!(plan.num_executors, self.num_executors(), "plan built for another executor count");
        let q = self.next;
        self.next += 1;
        let shared = Arc::new(QueryShared::new(q, self.now()));
        for e in &mut self.execs {
            e.push([Envelope::Install { query: q, plan: plan.clone(), shared: shared.clone() }]);
        }
        for (x, env) in start_messages(q, &plan) {
            shared.add_in_flight(1);
            self.execs[x as usize].push([env]);
        }
        self.queries.insert(q, shared);
        q
    }

    pub fn shared(&self, q: QueryId) -> &Arc<QueryShared> {
        &self.queries[&q]
    }

    pub fn is_finished(&self, q: QueryId) -> bool {
        self.queries[&q].is_finished()
    }

    pub fn outcome(&self, q: QueryId) -> QueryOutcome {
        self.queries[&q].outcome()
    }

    fn abort(&mut self, q: QueryId, fault: Option<String>) {
        let shared = self.queries[&q].clone();
        for e in &mut self.execs {
            shared.add_in_flight(1);
            e.push([Envelope::TerminateQuery { query: q }]);
        }
        if let Some(f) = fault {
            shared.fault(f);
        }
        if self.cfg.trace {
            self.trace.push(TraceEvent { tick: self.now(), exec: 0, query: q, addr: None, kind: EventKind::Terminate });
        }
        shared.time_out(self.now());
    }

    /// One round. Returns false when nothing happened.
    pub fn step(&mut self) -> bool {
        let mut order: Vec<usize> = (0..self.execs.len()).collect();
        if self.cfg.shuffle {
            order.shuffle(&mut self.rng);
        }
        let start = self.now();
        let mut active = false;
        self.last_round.clear();
        for i in order {
            let r = self.execs[i].run_quantum(start);
            active |= r.processed() > 0 || r.delivered > 0;
            self.last_round.push(r);
            if self.cfg.trace {
                self.trace.extend(self.execs[i].take_trace());
            }
            for (to, batch) in self.execs[i].take_outgoing() {
                active = true;
                self.execs[to as usize].push(batch);
            }
        }
        self.round += 1;
        let now = self.now();
        let timed_out: Vec<QueryId> = self
            .queries
            .iter()
            .filter(|(_, s)| !s.is_done() && now.saturating_sub(s.submitted) > self.cfg.timeout_ticks)
            .map(|(q, _)| *q)
            .collect();
        for q in timed_out {
            self.abort(q, None);
        }
        active
    }

    /// Per-executor reports of the last round, in stepping order.
    pub fn last_round(&self) -> &[QuantumReport] {
        &self.last_round
    }

    /// Steps until `q` finishes. A round without any activity while `q` is
    /// unfinished is an engine fault.
    pub fn run(&mut self, q: QueryId) -> QueryOutcome {
        self.run_until(|e| e.is_finished(q));
        self.outcome(q)
    }

    /// Steps until `done` holds, checked after every round. Unfinished
    /// queries are aborted as stalled when a round does nothing.
    pub fn run_until(&mut self, mut done: impl FnMut(&Engine) -> bool) {
        while !done(self) {
            if !self.step() && !done(self) && !self.execs.iter().any(|e| e.has_input()) {
                let stuck: Vec<QueryId> = self.queries.iter().filter(|(_, s)| !s.is_done()).map(|(q, _)| *q).collect();
                if stuck.is_empty() {
                    return;
                }
                for s in stuck {
                    self.abort(s, Some("no progress: query stalled".into()));
                }
            }
        }
    }

    /// Drops the bookkeeping of a finished query.
    pub fn forget(&mut self, q: QueryId) -> Option<QueryOutcome> {
        let s = self.queries.remove(&q)?;
        Some(s.outcome())
    }

    /// Steps until every submitted query finishes.
    pub fn run_all(&mut self) -> Vec<QueryOutcome> {
        let ids: Vec<QueryId> = self.queries.keys().copied().collect();
        ids.into_iter().map(|q| self.run(q)).collect()
    }

    pub fn take_trace(&mut self) -> Vec<TraceEvent> {
        std::mem::take(&mut self.trace)
    }

    pub fn loads(&self) -> Vec<LoadCounters> {
        self.execs.iter().map(|e| e.load().clone()).collect()
    }
}

struct Worker {
    handle: JoinHandle<Vec<TraceEvent>>,
    epoch: Arc<AtomicU64>,
    load: Arc<Mutex<LoadCounters>>,
}

/// One OS thread per executor, exchanging batches over channels.
pub struct ThreadedEngine {
    cfg: EngineConfig,
    senders: Vec<Sender<Vec<Envelope>>>,
    workers: Vec<Worker>,
    stop: Arc<AtomicBool>,
    start: Instant,
    next: QueryId,
}

impl ThreadedEngine {
    pub fn new(cfg: EngineConfig) -> ThreadedEngine {
        let n = cfg.executors.max(1);
        let (senders, receivers): (Vec<_>, Vec<_>) = (0..n).map(|_| unbounded::<Vec<Envelope>>()).unzip();
        let stop = Arc::new(AtomicBool::new(false));
        let start = Instant::now();
        let mut workers = Vec::new();
        for (i, rx) in receivers.into_iter().enumerate() {
            let mut exec = Executor::new(i as ExecId, n, cfg.quota, cfg.batch_size, cfg.trace);
            exec.connect(senders.clone(), start);
            let stop = stop.clone();
            let epoch = Arc::new(AtomicU64::new(0));
            let load = Arc::new(Mutex::new(LoadCounters::default()));
            let (ep, ld) = (epoch.clone(), load.clone());
            let handle = std::thread::Builder::new()
                .name(format!("exec-{i}"))
                .spawn(move || {
                    let mut trace = Vec::new();
                    loop {
                        while let Ok(b) = rx.try_recv() {
                            exec.push(b);
                        }
                        if stop.load(Ordering::Acquire) {
                            break;
                        }
                        let r = exec.run_quantum(0);
                        exec.flush();
                        trace.extend(exec.take_trace());
                        *ld.lock().expect("load lock") = exec.load().clone();
                        ep.fetch_add(1, Ordering::AcqRel);
                        if r.processed() == 0 && r.delivered == 0 {
                            match rx.recv_timeout(Duration::from_millis(1)) {
                                Ok(b) => exec.push(b),
                                Err(RecvTimeoutError::Timeout) => {}
                                Err(RecvTimeoutError::Disconnected) => break,
                            }
                        }
                    }
                    trace
                })
                .expect("spawn executor thread");
            workers.push(Worker { handle, epoch, load });
        }
        ThreadedEngine { cfg, senders, workers, stop, start, next: 0 }
    }

    /// Microseconds since the engine started.
    pub fn now(&self) -> u64 {
        self.start.elapsed().as_micros() as u64
    }

    pub fn submit(&mut self, plan: Arc<PhysicalPlan>) -> Arc<QueryShared> {
        let q = self.next;
        self.next += 1;
        let shared = Arc::new(QueryShared::new(q, self.now()));
        let mut batches: Vec<Vec<Envelope>> = (0..self.senders.len())
            .map(|_| vec![Envelope::Install { query: q, plan: plan.clone(), shared: shared.clone() }])
            .collect();
        for (x, env) in start_messages(q, &plan) {
            shared.add_in_flight(1);
            batches[x as usize].push(env);
        }
        for (s, b) in self.senders.iter().zip(batches) {
            let _ = s.send(b);
        }
        shared
    }

    /// Waits for `shared` to finish, aborting it on timeout.
    pub fn wait(&self, shared: &QueryShared) -> QueryOutcome {
        let deadline = Instant::now() + Duration::from_millis(self.cfg.timeout_ms);
        let mut aborted = false;
        while !shared.is_finished() {
            if !aborted && Instant::now() > deadline {
                aborted = true;
                for s in &self.senders {
                    shared.add_in_flight(1);
                    let _ = s.send(vec![Envelope::TerminateQuery { query: shared.id }]);
                }
                shared.time_out(self.now());
            }
            std::thread::sleep(Duration::from_micros(50));
        }
        // Every executor passes a quantum boundary, so its statistics for
        // this query are merged.
        let seen: Vec<u64> = self.workers.iter().map(|w| w.epoch.load(Ordering::Acquire)).collect();
        for (w, e) in self.workers.iter().zip(seen) {
            while w.epoch.load(Ordering::Acquire) < e + 2 && !w.handle.is_finished() {
                std::thread::yield_now();
            }
        }
        shared.outcome()
    }

    pub fn loads(&self) -> Vec<LoadCounters> {
        self.workers.iter().map(|w| w.load.lock().expect("load lock").clone()).collect()
    }

    /// Stops the executors and returns their traces.
    pub fn shutdown(self) -> Vec<TraceEvent> {
        self.stop.store(true, Ordering::Release);
        let mut all = Vec::new();
        for w in self.workers {
            all.extend(w.handle.join().expect("executor thread"));
        }
        all
    }
}
