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

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::ops::Bound;
use std::sync::Arc;
use std::time::Instant;

use crossbeam_channel::Sender;

use crate::dataflow::{
    egress_strip, BranchAllocator, EdgeDecl, EdgeId, OperatorSpec, ScopeId, ScopeKind, ScopeTag, VertexId,
};
use crate::graph::{ExecId, Vid};
use crate::progress::{BranchEgressProgress, EosAction, EosLedger, IterationOutcome, IterationReports, LoopEgressProgress, ScopeDecision, SiCountReport, SkipOutcome, SkipTracker};
use crate::query::{PhysicalPlan, EXTERNAL_EDGE};

use super::address::{subtree_start, Chain, OpAddr};
use super::logic::{forward, run_stateless, Ctx, Outputs};
use super::message::{Envelope, EosTarget, Item, Payload, QueryId, Report, Value};
use super::quota::{assign_quota, QuotaPolicy};
use super::stats::{LoadCounters, QueryStats};
use super::trace::{EventKind, TraceEvent};
use super::QueryShared;

/// Outbound side of an executor: batching, the local queue and the trace.
struct Io {
    exec: ExecId,
    num_execs: u32,
    now: u64,
    batch: usize,
    outbox: Vec<Vec<Envelope>>,
    ready: Vec<(ExecId, Vec<Envelope>)>,
    local: VecDeque<Envelope>,
    trace: Option<Vec<TraceEvent>>,
    senders: Option<Vec<Sender<Vec<Envelope>>>>,
}

impl Io {
    fn send(&mut self, shared: &QueryShared, stats: &mut QueryStats, to: ExecId, env: Envelope) {
        shared.add_in_flight(1);
        stats.messages_sent += 1;
        if to == self.exec {
            self.local.push_back(env);
            return;
        }
        let b = &mut self.outbox[to as usize];
        b.push(env);
        if b.len() >= self.batch {
            let full = std::mem::take(b);
            match &self.senders {
                Some(s) => {
                    let _ = s[to as usize].send(full);
                }
                None => self.ready.push((to, full)),
            }
        }
    }

    fn tracing(&self) -> bool {
        self.trace.is_some()
    }

    fn event(&mut self, query: QueryId, addr: Option<&OpAddr>, kind: EventKind) {
        if let Some(t) = &mut self.trace {
            t.push(TraceEvent { tick: self.now, exec: self.exec, query, addr: addr.cloned(), kind });
        }
    }
}

enum PlainState {
    Stateless,
    Dedup(HashSet<Vid>),
    Count(u64),
    WhereExit(HashSet<u64>),
}

struct IngressSt {
    scope: ScopeId,
    kind: ScopeKind,
    index: u32,
    max_si: Option<u32>,
    fwd: EosLedger,
    fwd_done: bool,
    back_expect: Vec<(EdgeId, u32)>,
    alloc: BranchAllocator,
    pending: VecDeque<Payload>,
    waiting: bool,
    routed: BTreeMap<u32, u64>,
    back: BTreeMap<u32, EosLedger>,
    iters: IterationReports,
}

struct EgressSt {
    kind: ScopeKind,
    ingress: VertexId,
    max_si: Option<u32>,
    scope: ScopeId,
    expect: Vec<(EdgeId, u32)>,
    ledgers: BTreeMap<u32, EosLedger>,
    branch: BranchEgressProgress,
    looped: LoopEgressProgress,
    emitted: HashSet<u32>,
}

enum OpKind {
    Plain { ledger: EosLedger, state: PlainState },
    Ingress(Box<IngressSt>),
    Egress(Box<EgressSt>),
}

struct OpState {
    mailbox: VecDeque<Item>,
    kind: OpKind,
}

enum Flow {
    Keep,
    Complete,
}

/// One query's operators on one executor.
struct QueryRt {
    plan: Arc<PhysicalPlan>,
    shared: Arc<QueryShared>,
    ops: BTreeMap<OpAddr, OpState>,
    completed: BTreeSet<OpAddr>,
    tombs: HashSet<Chain>,
    trackers: BTreeMap<OpAddr, SkipTracker>,
    runnable: BTreeMap<OpAddr, (u64, ScopeTag)>,
    scope_ops: BTreeSet<Chain>,
    live: BTreeMap<ScopeId, BTreeSet<ScopeTag>>,
    waiters: BTreeMap<ScopeId, Vec<OpAddr>>,
    cancelled: HashSet<u64>,
    trav_ctr: u64,
    terminated: bool,
    stats: QueryStats,
    dirty: bool,
    seq: u64,
    pool: Vec<VecDeque<Item>>,
    peak_live: usize,
}

fn tracker_key(addr: &OpAddr) -> OpAddr {
    OpAddr { chain: addr.chain.clone(), vertex: addr.vertex, part: u32::MAX }
}

impl QueryRt {
    fn new(plan: Arc<PhysicalPlan>, shared: Arc<QueryShared>) -> QueryRt {
        QueryRt {
            plan,
            shared,
            ops: BTreeMap::new(),
            completed: BTreeSet::new(),
            tombs: HashSet::new(),
            trackers: BTreeMap::new(),
            runnable: BTreeMap::new(),
            scope_ops: BTreeSet::new(),
            live: BTreeMap::new(),
            waiters: BTreeMap::new(),
            cancelled: HashSet::new(),
            trav_ctr: 0,
            terminated: false,
            stats: QueryStats::default(),
            dirty: false,
            seq: 0,
            pool: Vec::new(),
            peak_live: 0,
        }
    }

    fn qid(&self) -> QueryId {
        self.shared.id
    }

    fn fault(&mut self, io: &mut Io, addr: Option<&OpAddr>, msg: String) {
        let msg = match addr {
            Some(a) => format!("exec {} {a}: {msg}", io.exec),
            None => format!("exec {}: {msg}", io.exec),
        };
        io.event(self.qid(), addr, EventKind::Fault(msg.clone()));
        self.shared.fault(msg);
    }

    fn in_tombstone(&self, chain: &[(ScopeId, u32)]) -> bool {
        !self.tombs.is_empty() && (1..=chain.len()).any(|d| self.tombs.contains(&chain[..d]))
    }

    fn si_tombstoned(&self, s: ScopeId, tag: &ScopeTag) -> bool {
        if self.tombs.is_empty() {
            return false;
        }
        let chain: Chain = self.plan.topo.scope_chain(s).into_iter().zip(tag.elements().iter().copied()).collect();
        self.in_tombstone(&chain)
    }

    /// Tag an operator of `v` has when receiving on `edge` a message tagged `tag`.
    fn op_tag(&self, v: VertexId, edge: EdgeId, tag: &ScopeTag) -> Result<ScopeTag, String> {
        let strip = self.plan.topo.is_egress(v).is_some()
            || (edge != EXTERNAL_EDGE && self.plan.df.edge(edge).backward);
        let t = if strip { egress_strip(tag).map_err(|e| e.to_string())? } else { tag.clone() };
        if t.depth() != self.plan.topo.tag_depth(v) {
            return Err(format!("malformed address: tag {tag} for vertex {v}"));
        }
        Ok(t)
    }

    fn send(&mut self, io: &mut Io, to: ExecId, env: Envelope) {
        self.dirty = true;
        io.send(&self.shared, &mut self.stats, to, env);
    }

    fn send_data(&mut self, io: &mut Io, e: &EdgeDecl, tag: ScopeTag, payload: Payload) {
        let (vertex, trav) = match &payload {
            Payload::Trav(t) => (t.vertex, t.travs.last().copied()),
            Payload::Count(_) => (0, None),
        };
        let part = self.plan.target_part(e, io.exec, vertex, trav, &tag);
        let to = self.plan.exec_of(e.dst, part);
        let env = Envelope::Data { query: self.qid(), vertex: e.dst, part, edge: e.id, tag, payload };
        self.send(io, to, env);
    }

    fn send_eos(&mut self, io: &mut Io, e: &EdgeDecl, tag: ScopeTag, weight: u32) {
        let w = e.dst;
        let q = self.qid();
        if self.plan.topo.is_egress(w).is_some() {
            let j = self.plan.egress_part(w, &tag);
            let to = self.plan.exec_of(w, j);
            self.send(io, to, Envelope::Eos { query: q, vertex: w, target: EosTarget::Part(j), edge: e.id, tag, weight });
        } else {
            let plan = self.plan.clone();
            for &to in &plan.vertex(w).hosts {
                let env = Envelope::Eos { query: q, vertex: w, target: EosTarget::AllLocal, edge: e.id, tag: tag.clone(), weight };
                self.send(io, to, env);
            }
        }
    }

    fn eos_out(&mut self, io: &mut Io, v: VertexId, tag: &ScopeTag, weight: u32) {
        let plan = self.plan.clone();
        for &eid in &plan.topo.out_edges[v as usize] {
            self.send_eos(io, plan.df.edge(eid), tag.clone(), weight);
        }
    }

    fn send_outputs(&mut self, io: &mut Io, v: VertexId, tag: &ScopeTag, outs: Outputs) {
        let plan = self.plan.clone();
        for (port, p) in outs {
            for &eid in &plan.topo.out_edges[v as usize] {
                let e = plan.df.edge(eid);
                if e.port == port {
                    self.send_data(io, e, tag.clone(), p.clone());
                }
            }
        }
    }

    fn push_item(&mut self, io: &mut Io, addr: &OpAddr, item: Item) {
        let Some(op) = self.ops.get_mut(addr) else { return };
        if op.mailbox.is_empty() && !self.runnable.contains_key(addr) {
            self.runnable.insert(addr.clone(), (self.seq, addr.tag()));
            self.seq += 1;
        }
        let data = item.is_data();
        op.mailbox.push_back(item);
        self.shared.add_in_flight(1);
        if io.tracing() {
            io.event(self.qid(), Some(addr), EventKind::Enq { data });
        }
    }

    fn discard(&mut self, io: &mut Io, addr: &OpAddr, mut op: OpState) {
        let n = op.mailbox.len();
        if n > 0 {
            self.shared.add_in_flight(-(n as i64));
            self.stats.discarded += n as u64;
            io.event(self.qid(), Some(addr), EventKind::Discard { items: n as u32 });
        }
        op.mailbox.clear();
        if self.pool.len() < 2 * self.peak_live.max(1) {
            self.pool.push(op.mailbox);
        }
    }

    fn new_kind(&self, addr: &OpAddr) -> OpKind {
        let plan = &self.plan;
        let v = addr.vertex;
        let expect = &plan.vertex(v).expect;
        match &plan.df.vertex(v).op {
            OperatorSpec::Ingress => {
                let s = plan.topo.is_ingress(v).expect("ingress vertex");
                let sd = plan.df.scope(s);
                let parts = plan.parts(v);
                let (back, fwd): (Vec<_>, Vec<_>) = expect.iter().partition(|(e, _)| plan.df.edge(*e).backward);
                OpKind::Ingress(Box::new(IngressSt {
                    scope: s,
                    kind: sd.kind,
                    index: addr.part,
                    max_si: sd.max_si.filter(|_| sd.kind == ScopeKind::Branch),
                    fwd: EosLedger::new(&fwd, true),
                    fwd_done: false,
                    back_expect: back,
                    alloc: BranchAllocator::new(addr.part, parts),
                    pending: VecDeque::new(),
                    waiting: false,
                    routed: BTreeMap::new(),
                    back: BTreeMap::new(),
                    iters: IterationReports::new(parts),
                }))
            }
            OperatorSpec::Egress => {
                let s = plan.topo.is_egress(v).expect("egress vertex");
                let sd = plan.df.scope(s);
                let ip = plan.parts(sd.ingress);
                OpKind::Egress(Box::new(EgressSt {
                    kind: sd.kind,
                    ingress: sd.ingress,
                    max_si: sd.max_si.filter(|_| sd.kind == ScopeKind::Branch),
                    scope: s,
                    expect: expect.clone(),
                    ledgers: BTreeMap::new(),
                    branch: BranchEgressProgress::new(ip),
                    looped: LoopEgressProgress::new(ip),
                    emitted: HashSet::new(),
                }))
            }
            op => {
                let state = match op {
                    OperatorSpec::Dedup => PlainState::Dedup(HashSet::new()),
                    OperatorSpec::Count => PlainState::Count(0),
                    OperatorSpec::WhereExit { .. } => PlainState::WhereExit(HashSet::new()),
                    _ => PlainState::Stateless,
                };
                let outs = !plan.topo.out_edges[v as usize].is_empty();
                OpKind::Plain { ledger: EosLedger::new(expect, outs), state }
            }
        }
    }

    /// Makes sure the operator at `addr` exists. Returns false when it
    /// already completed.
    fn ensure_op(&mut self, io: &mut Io, addr: &OpAddr) -> bool {
        if self.ops.contains_key(addr) {
            return true;
        }
        if self.completed.contains(addr) {
            return false;
        }
        for d in 1..=addr.chain.len() {
            if self.scope_ops.insert(addr.chain[..d].iter().copied().collect()) {
                self.stats.scope_ops_created += 1;
            }
        }
        let kind = self.new_kind(addr);
        let mailbox = self.pool.pop().unwrap_or_default();
        self.ops.insert(addr.clone(), OpState { mailbox, kind });
        self.peak_live = self.peak_live.max(self.ops.len());
        self.stats.ops_created += 1;
        self.dirty = true;
        io.event(self.qid(), Some(addr), EventKind::Create);
        if !self.plan.df.vertex(addr.vertex).op.completes_eagerly() {
            let key = tracker_key(addr);
            let plan = self.plan.clone();
            let t = self.trackers.entry(key).or_insert_with(|| {
                let local = plan.vertex(addr.vertex).local[io.exec as usize].len() as u32;
                SkipTracker::new(&plan.vertex(addr.vertex).expect, local)
            });
            if t.is_full() {
                self.fault(io, Some(addr), "DATA after end of stream".into());
            }
            let buffered = self.trackers.get_mut(&tracker_key(addr)).expect("tracker").on_create();
            for (edge, weight) in buffered {
                let tag = addr.tag();
                self.push_item(io, addr, Item::Eos { edge, tag, weight });
            }
        }
        true
    }

    fn deliver(&mut self, io: &mut Io, env: Envelope) {
        if !matches!(env, Envelope::Install { .. }) {
            self.shared.add_in_flight(-1);
        }
        if self.terminated {
            if let Envelope::Data { .. } = env {
                self.stats.dropped += 1;
                self.dirty = true;
            }
            return;
        }
        match env {
            Envelope::Install { .. } => {}
            Envelope::Data { vertex, part, edge, tag, payload, .. } => self.deliver_data(io, vertex, part, edge, tag, payload),
            Envelope::Eos { vertex, target, edge, tag, weight, .. } => self.deliver_eos(io, vertex, target, edge, tag, weight),
            Envelope::Report { vertex, part, tag, report, .. } => {
                let addr = OpAddr::new(&self.plan.topo, vertex, part, &tag);
                if !self.in_tombstone(&addr.chain) && self.ensure_op(io, &addr) {
                    self.push_item(io, &addr, Item::Report(report));
                }
            }
            Envelope::SiTerminated { vertex, part, tag, .. } => {
                let Ok(ptag) = egress_strip(&tag) else { return };
                // Tombstone first, so stale EOS of the instance from other
                // executors is recognized even after the egress completes.
                if let Some(s) = self.plan.topo.is_egress(vertex) {
                    self.terminate_si(io, s, &tag);
                }
                let addr = OpAddr::new(&self.plan.topo, vertex, part, &ptag);
                if !self.in_tombstone(&addr.chain) && self.ensure_op(io, &addr) {
                    let s = tag.last().expect("instance tag");
                    self.push_item(io, &addr, Item::SiTerminated(s));
                }
            }
            Envelope::SiComplete { scope, tag, .. } => self.release(io, scope, &tag),
            Envelope::TerminateSi { scope, tag, .. } => self.terminate_si(io, scope, &tag),
            Envelope::TerminateQuery { .. } => self.terminate_all(io),
            Envelope::Cancel { trav, .. } => {
                self.cancelled.insert(trav);
            }
        }
    }

    fn deliver_data(&mut self, io: &mut Io, v: VertexId, part: u32, edge: EdgeId, tag: ScopeTag, payload: Payload) {
        let otag = match self.op_tag(v, edge, &tag) {
            Ok(t) => t,
            Err(m) => return self.fault(io, None, m),
        };
        let addr = OpAddr::new(&self.plan.topo, v, part, &otag);
        if self.in_tombstone(&addr.chain) || !self.ensure_op(io, &addr) {
            self.stats.dropped += 1;
            self.dirty = true;
            io.event(self.qid(), Some(&addr), EventKind::Drop);
            return;
        }
        self.push_item(io, &addr, Item::Data { edge, tag, payload });
    }

    fn deliver_eos(&mut self, io: &mut Io, v: VertexId, target: EosTarget, edge: EdgeId, tag: ScopeTag, weight: u32) {
        let otag = match self.op_tag(v, edge, &tag) {
            Ok(t) => t,
            Err(m) => return self.fault(io, None, m),
        };
        let plan = self.plan.clone();
        let probe = OpAddr::new(&plan.topo, v, 0, &otag);
        if self.in_tombstone(&probe.chain) {
            return;
        }
        if let Some(s) = plan.topo.is_egress(v) {
            if self.si_tombstoned(s, &tag) {
                return;
            }
        }
        let local: Vec<u32> = match target {
            EosTarget::Part(j) => vec![j],
            EosTarget::AllLocal => plan.vertex(v).local[io.exec as usize].clone(),
        };
        let addr_of = |p: u32| OpAddr { chain: probe.chain.clone(), vertex: v, part: p };
        if plan.df.vertex(v).op.completes_eagerly() {
            for p in local {
                let addr = addr_of(p);
                if self.ensure_op(io, &addr) {
                    self.push_item(io, &addr, Item::Eos { edge, tag: tag.clone(), weight });
                } else {
                    self.fault(io, Some(&addr), "EOS after completion".into());
                }
            }
            return;
        }
        let key = tracker_key(&probe);
        let n_local = local.len() as u32;
        let outcome = self
            .trackers
            .entry(key)
            .or_insert_with(|| SkipTracker::new(&plan.vertex(v).expect, n_local))
            .on_eos(edge, weight);
        for p in local {
            let addr = addr_of(p);
            if self.ops.contains_key(&addr) {
                self.push_item(io, &addr, Item::Eos { edge, tag: tag.clone(), weight });
            }
        }
        match outcome {
            Err(e) => self.fault(io, Some(&probe), e.to_string()),
            Ok(SkipOutcome::EmittedOnBehalf { weight: w }) if w > 0 => {
                self.stats.eos_skipped += w as u64;
                self.dirty = true;
                io.event(self.qid(), Some(&probe), EventKind::EosSkip { weight: w });
                self.eos_out(io, v, &otag, w);
            }
            Ok(_) => {}
        }
    }

    /// Best runnable operator: highest priority, then longest runnable.
    fn pick(&self) -> Option<OpAddr> {
        let sched = &self.plan.sched;
        let mut best: Option<(&OpAddr, &(u64, ScopeTag))> = None;
        for (a, r) in &self.runnable {
            best = match best {
                None => Some((a, r)),
                Some((ba, br)) => {
                    let o = sched.compare((a.vertex, &r.1), (ba.vertex, &br.1));
                    if o.is_lt() || (o.is_eq() && r.0 < br.0) {
                        Some((a, r))
                    } else {
                        Some((ba, br))
                    }
                }
            };
        }
        // A fifo level makes unrelated operators tie with both sides of a
        // strict pair, so the seq tie-break above can land on an operator
        // something else outranks. Climb until nothing does.
        for _ in 0..self.runnable.len() {
            let (ba, br) = best?;
            let better = self.runnable.iter().find(|(a, r)| sched.compare((a.vertex, &r.1), (ba.vertex, &br.1)).is_lt());
            match better {
                Some(b) => best = Some(b),
                None => break,
            }
        }
        best.map(|(a, _)| a.clone())
    }

    /// Processes the head item of `addr`'s mailbox.
    fn process_one(&mut self, io: &mut Io, addr: &OpAddr, load: &mut LoadCounters) {
        let Some(mut op) = self.ops.remove(addr) else {
            self.runnable.remove(addr);
            return;
        };
        let Some(item) = op.mailbox.pop_front() else {
            self.runnable.remove(addr);
            self.ops.insert(addr.clone(), op);
            return;
        };
        self.shared.add_in_flight(-1);
        let plan = self.plan.clone();
        let vp = plan.vertex(addr.vertex);
        let data = item.is_data();
        if io.tracing() {
            io.event(self.qid(), Some(addr), EventKind::Process { data });
        }
        if data {
            self.stats.data_processed += 1;
        } else {
            self.stats.control_processed += 1;
        }
        *self.stats.per_vertex.entry(addr.vertex).or_default() += 1;
        *self.stats.per_exec.entry(io.exec).or_default() += 1;
        if let Some(r) = plan.df.vertex(addr.vertex).region {
            *self.stats.per_region.entry(r).or_default() += 1;
        }
        self.dirty = true;
        load.processed += 1;
        if vp.graph_accessing {
            *load.per_tablet.entry(addr.part).or_default() += 1;
        }
        let flow = match &mut op.kind {
            OpKind::Plain { ledger, state } => match item {
                Item::Data { tag, payload, .. } => self.plain_data(io, addr, state, tag, payload),
                Item::Eos { edge, weight, .. } => match ledger.on_eos(edge, weight) {
                    Ok(EosAction::None) => Flow::Keep,
                    Ok(_) => self.plain_complete(io, addr, state),
                    Err(e) => {
                        self.fault(io, Some(addr), e.to_string());
                        Flow::Keep
                    }
                },
                other => {
                    self.fault(io, Some(addr), format!("unexpected item {other:?}"));
                    Flow::Keep
                }
            },
            OpKind::Ingress(st) => self.ingress_item(io, addr, st, item),
            OpKind::Egress(st) => self.egress_item(io, addr, st, item),
        };
        let gone = self.terminated || self.in_tombstone(&addr.chain);
        match flow {
            Flow::Complete => {
                io.event(self.qid(), Some(addr), EventKind::Complete);
                self.runnable.remove(addr);
                self.discard(io, addr, op);
                if !gone {
                    self.completed.insert(addr.clone());
                }
            }
            Flow::Keep if gone => {
                io.event(self.qid(), Some(addr), EventKind::Terminate);
                self.runnable.remove(addr);
                self.discard(io, addr, op);
            }
            Flow::Keep => {
                if op.mailbox.is_empty() {
                    self.runnable.remove(addr);
                }
                self.ops.insert(addr.clone(), op);
            }
        }
    }

    fn plain_data(&mut self, io: &mut Io, addr: &OpAddr, state: &mut PlainState, tag: ScopeTag, payload: Payload) -> Flow {
        let plan = self.plan.clone();
        let v = addr.vertex;
        let vd = plan.df.vertex(v);
        if let Payload::Trav(t) = &payload {
            if !self.cancelled.is_empty() && t.travs.iter().any(|x| self.cancelled.contains(x)) {
                self.stats.dropped += 1;
                io.event(self.qid(), Some(addr), EventKind::Drop);
                return Flow::Keep;
            }
        }
        let outs: Outputs = match (&vd.op, state, payload) {
            (OperatorSpec::Dedup, PlainState::Dedup(seen), Payload::Trav(t)) => {
                if seen.insert(t.vertex) {
                    forward(Payload::Trav(t))
                } else {
                    Outputs::new()
                }
            }
            (OperatorSpec::Count, PlainState::Count(n), _) => {
                *n += 1;
                Outputs::new()
            }
            (OperatorSpec::Sink { limit }, _, p) => {
                let value = match p {
                    Payload::Trav(t) => Value::Vertex(t.vertex),
                    Payload::Count(c) => Value::Count(c),
                };
                let n = self.shared.push_result(value) as u64;
                if limit.is_some_and(|l| n >= l) {
                    self.complete_query(io);
                    return Flow::Complete;
                }
                Outputs::new()
            }
            (OperatorSpec::WhereEnter, _, Payload::Trav(mut t)) => {
                let id = ((io.exec as u64) << 40) | self.trav_ctr;
                self.trav_ctr += 1;
                t.outer.push(t.vertex);
                t.travs.push(id);
                forward(Payload::Trav(t))
            }
            (OperatorSpec::WhereExit { cancellable }, PlainState::WhereExit(seen), Payload::Trav(mut t)) => {
                let id = t.travs.pop().expect("tracked traversal");
                if seen.insert(id) {
                    t.vertex = t.outer.pop().expect("outer element");
                    if *cancellable {
                        self.cancelled.insert(id);
                        let q = self.qid();
                        for x in 0..io.num_execs {
                            if x != io.exec {
                                self.send(io, x, Envelope::Cancel { query: q, trav: id });
                            }
                        }
                    }
                    forward(Payload::Trav(t))
                } else {
                    Outputs::new()
                }
            }
            (spec, _, Payload::Trav(t)) => {
                let tablet = vd_tablet(&plan, v, addr.part);
                let ctx = Ctx {
                    graph: &plan.graph,
                    tablet,
                    sets: &plan.sets,
                    label: plan.vertex(v).label,
                    iteration: tag.last(),
                };
                match run_stateless(spec, &ctx, t) {
                    Ok(o) => o,
                    Err(e) => {
                        self.fault(io, Some(addr), e.to_string());
                        Outputs::new()
                    }
                }
            }
            (spec, _, p) => {
                self.fault(io, Some(addr), format!("{spec:?} cannot take {p:?}"));
                Outputs::new()
            }
        };
        if !outs.is_empty() {
            self.send_outputs(io, v, &tag, outs);
            if vd.cancel_trigger {
                self.cancel_instance(io, v, &tag);
            }
        }
        Flow::Keep
    }

    fn plain_complete(&mut self, io: &mut Io, addr: &OpAddr, state: &mut PlainState) -> Flow {
        let plan = self.plan.clone();
        let tag = addr.tag();
        match (&plan.df.vertex(addr.vertex).op, state) {
            (OperatorSpec::Count, PlainState::Count(n)) => {
                let n = *n;
                self.send_outputs(io, addr.vertex, &tag, forward(Payload::Count(n)));
            }
            (OperatorSpec::Sink { .. }, _) => {
                self.complete_query(io);
                return Flow::Complete;
            }
            _ => {}
        }
        self.eos_out(io, addr.vertex, &tag, 1);
        Flow::Complete
    }

    fn ingress_item(&mut self, io: &mut Io, addr: &OpAddr, st: &mut IngressSt, item: Item) -> Flow {
        let plan = self.plan.clone();
        let v = addr.vertex;
        let u = addr.tag();
        match item {
            Item::Data { edge, tag, payload } => {
                if plan.df.edge(edge).backward {
                    let k = tag.last().expect("iteration tag") + 1;
                    *st.routed.entry(k).or_default() += 1;
                    self.send_outputs(io, v, &u.child(k), forward(payload));
                } else if st.kind == ScopeKind::Loop {
                    *st.routed.entry(1).or_default() += 1;
                    self.send_outputs(io, v, &u.child(1), forward(payload));
                } else if st.max_si.is_some_and(|m| self.live_count(st.scope) >= m as usize) {
                    st.pending.push_back(payload);
                    self.wait(addr, st);
                } else {
                    self.enter_branch(io, v, &u, st, payload);
                }
                Flow::Keep
            }
            Item::Eos { edge, tag, weight } => {
                if plan.df.edge(edge).backward {
                    let k = tag.last().expect("iteration tag");
                    let l = st.back.entry(k).or_insert_with(|| EosLedger::new(&st.back_expect, true));
                    match l.on_eos(edge, weight) {
                        Ok(EosAction::None) => {}
                        Ok(_) => {
                            st.back.remove(&k);
                            self.iteration_report(io, v, &u, st, k + 1);
                        }
                        Err(e) => self.fault(io, Some(addr), e.to_string()),
                    }
                    return Flow::Keep;
                }
                match st.fwd.on_eos(edge, weight) {
                    Ok(EosAction::None) => Flow::Keep,
                    Ok(_) => {
                        st.fwd_done = true;
                        match st.kind {
                            ScopeKind::Branch => self.branch_report(io, addr, st),
                            ScopeKind::Loop => {
                                self.iteration_report(io, v, &u, st, 1);
                                Flow::Keep
                            }
                        }
                    }
                    Err(e) => {
                        self.fault(io, Some(addr), e.to_string());
                        Flow::Keep
                    }
                }
            }
            Item::Report(Report::Iteration { k, from, count }) => match st.iters.on_report(k, from, count) {
                Ok(Some(IterationOutcome::Live { k, .. })) => {
                    if st.index == 0 {
                        self.stats.sis_created += 1;
                    }
                    self.eos_out(io, v, &u.child(k), 1);
                    Flow::Keep
                }
                Ok(Some(IterationOutcome::Empty { .. })) => Flow::Complete,
                Ok(None) => Flow::Keep,
                Err(e) => {
                    self.fault(io, Some(addr), e.to_string());
                    Flow::Keep
                }
            },
            Item::Wake => {
                st.waiting = false;
                let m = st.max_si.unwrap_or(u32::MAX) as usize;
                while !st.pending.is_empty() && self.live_count(st.scope) < m {
                    let p = st.pending.pop_front().expect("pending");
                    self.enter_branch(io, v, &u, st, p);
                }
                if !st.pending.is_empty() {
                    self.wait(addr, st);
                }
                self.branch_report(io, addr, st)
            }
            other => {
                self.fault(io, Some(addr), format!("unexpected item {other:?}"));
                Flow::Keep
            }
        }
    }

    fn live_count(&self, s: ScopeId) -> usize {
        self.live.get(&s).map_or(0, |l| l.len())
    }

    fn wait(&mut self, addr: &OpAddr, st: &mut IngressSt) {
        if !st.waiting {
            st.waiting = true;
            self.waiters.entry(st.scope).or_default().push(addr.clone());
        }
    }

    fn enter_branch(&mut self, io: &mut Io, v: VertexId, u: &ScopeTag, st: &mut IngressSt, payload: Payload) {
        let s = st.alloc.next_ordinal();
        let t = u.child(s);
        self.stats.sis_created += 1;
        if st.max_si.is_some() {
            self.live.entry(st.scope).or_default().insert(t.clone());
            io.event(self.qid(), None, EventKind::SiEnter { scope: st.scope, tag: t.clone() });
        }
        let payload = match payload {
            Payload::Trav(mut tr) => {
                tr.outer.push(tr.vertex);
                Payload::Trav(tr)
            }
            p => p,
        };
        self.send_outputs(io, v, &t, forward(payload));
        self.eos_out(io, v, &t, 1);
    }

    /// Branch ingress: once all input is routed, tell every egress operator
    /// how many instances this operator created.
    fn branch_report(&mut self, io: &mut Io, addr: &OpAddr, st: &mut IngressSt) -> Flow {
        if !st.fwd_done || !st.pending.is_empty() {
            return Flow::Keep;
        }
        let plan = self.plan.clone();
        let egress = plan.df.scope(st.scope).egress;
        let u = addr.tag();
        let report = Report::Branch { from: st.index, count: st.alloc.count() };
        for j in 0..plan.parts(egress) {
            let env = Envelope::Report { query: self.qid(), vertex: egress, part: j, tag: u.clone(), report };
            self.send(io, plan.exec_of(egress, j), env);
        }
        io.event(self.qid(), Some(addr), EventKind::SiReport);
        Flow::Complete
    }

    /// Loop ingress: broadcast how many messages it routed into iteration `k`.
    fn iteration_report(&mut self, io: &mut Io, v: VertexId, u: &ScopeTag, st: &mut IngressSt, k: u32) {
        let plan = self.plan.clone();
        let egress = plan.df.scope(st.scope).egress;
        let count = st.routed.remove(&k).unwrap_or(0);
        let report = Report::Iteration { k, from: st.index, count };
        let q = self.qid();
        for w in [v, egress] {
            for j in 0..plan.parts(w) {
                let env = Envelope::Report { query: q, vertex: w, part: j, tag: u.clone(), report };
                self.send(io, plan.exec_of(w, j), env);
            }
        }
        if io.tracing() {
            let a = OpAddr::new(&plan.topo, v, st.index, u);
            io.event(q, Some(&a), EventKind::SiReport);
        }
    }

    fn egress_item(&mut self, io: &mut Io, addr: &OpAddr, st: &mut EgressSt, item: Item) -> Flow {
        let plan = self.plan.clone();
        let v = addr.vertex;
        let u = addr.tag();
        let owns = |s: u32| plan.egress_part(v, &u.child(s)) == addr.part;
        match item {
            Item::Data { tag, payload, .. } => {
                let s = tag.last().expect("instance tag");
                match st.kind {
                    ScopeKind::Loop => self.send_outputs(io, v, &u, forward(payload)),
                    ScopeKind::Branch => {
                        if !st.branch.is_completed(s) && st.emitted.insert(s) {
                            let p = match payload {
                                Payload::Trav(mut t) => {
                                    t.vertex = t.outer.pop().expect("outer element");
                                    Payload::Trav(t)
                                }
                                p => p,
                            };
                            self.send_outputs(io, v, &u, forward(p));
                        }
                    }
                }
                return Flow::Keep;
            }
            Item::Eos { edge, tag, weight } => {
                let s = tag.last().expect("instance tag");
                if st.kind == ScopeKind::Branch && st.branch.is_completed(s) {
                    return Flow::Keep;
                }
                let l = st.ledgers.entry(s).or_insert_with(|| EosLedger::new(&st.expect, true));
                match l.on_eos(edge, weight) {
                    Ok(EosAction::None) => return Flow::Keep,
                    Ok(_) => {
                        st.ledgers.remove(&s);
                        match st.kind {
                            ScopeKind::Branch => self.branch_si_done(io, &u, st, s),
                            ScopeKind::Loop => {
                                st.looped.on_iteration_complete(s);
                            }
                        }
                    }
                    Err(e) => self.fault(io, Some(addr), e.to_string()),
                }
            }
            Item::SiTerminated(s) => {
                st.ledgers.remove(&s);
                if !st.branch.is_completed(s) {
                    self.branch_si_done(io, &u, st, s);
                }
            }
            Item::Report(Report::Branch { from, count }) => {
                let r = SiCountReport { ingress: from, scope: st.scope, count };
                if let Err(e) = st.branch.on_report(r, owns) {
                    self.fault(io, Some(addr), e.to_string());
                }
            }
            Item::Report(Report::Iteration { k, from, count }) => {
                if let Err(e) = st.looped.on_report(k, from, count) {
                    self.fault(io, Some(addr), e.to_string());
                }
            }
            Item::Wake => {}
        }
        let done = match st.kind {
            ScopeKind::Branch => st.branch.decision() == ScopeDecision::Complete,
            ScopeKind::Loop => st.looped.is_complete(owns),
        };
        if done {
            self.eos_out(io, v, &u, 1);
            Flow::Complete
        } else {
            Flow::Keep
        }
    }

    fn branch_si_done(&mut self, io: &mut Io, u: &ScopeTag, st: &mut EgressSt, s: u32) {
        st.branch.on_si_complete(s);
        if st.max_si.is_some() {
            let plan = self.plan.clone();
            let owner = plan.branch_owner(st.ingress, s);
            let env = Envelope::SiComplete { query: self.qid(), scope: st.scope, tag: u.child(s) };
            self.send(io, plan.exec_of(st.ingress, owner), env);
        }
    }

    /// A Max_SI slot of `scope` held by `tag` is free again.
    fn release(&mut self, io: &mut Io, scope: ScopeId, tag: &ScopeTag) {
        let removed = self.live.get_mut(&scope).is_some_and(|l| l.remove(tag));
        if removed {
            io.event(self.qid(), None, EventKind::SiDone { scope, tag: tag.clone() });
            self.wake(io, scope);
        }
    }

    fn wake(&mut self, io: &mut Io, scope: ScopeId) {
        for a in self.waiters.remove(&scope).unwrap_or_default() {
            self.push_item(io, &a, Item::Wake);
        }
    }

    /// The cancellation trigger `v` produced output: its branch instance is
    /// done, everywhere.
    fn cancel_instance(&mut self, io: &mut Io, v: VertexId, tag: &ScopeTag) {
        let plan = self.plan.clone();
        let Some(&s) = plan.topo.chain(v).last() else { return };
        let sd = plan.df.scope(s);
        if sd.kind != ScopeKind::Branch {
            return;
        }
        let q = self.qid();
        // Egress first: it must see the trigger's output before the instance
        // is reported terminated (same channel, so order is preserved).
        let j = plan.egress_part(sd.egress, tag);
        let env = Envelope::SiTerminated { query: q, vertex: sd.egress, part: j, tag: tag.clone() };
        self.send(io, plan.exec_of(sd.egress, j), env);
        for &x in &plan.vertex(sd.ingress).hosts {
            if x != io.exec {
                self.send(io, x, Envelope::TerminateSi { query: q, scope: s, tag: tag.clone() });
            }
        }
        self.terminate_si(io, s, tag);
    }

    /// Destroys every operator inside instance `tag` of scope `s` and
    /// tombstones the instance.
    fn terminate_si(&mut self, io: &mut Io, s: ScopeId, tag: &ScopeTag) {
        let chain = self.plan.topo.scope_chain(s);
        if chain.len() != tag.depth() {
            return self.fault(io, None, format!("malformed terminate of {tag} in scope {s}"));
        }
        let prefix: Chain = chain.into_iter().zip(tag.elements().iter().copied()).collect();
        if !self.tombs.insert(prefix.clone()) {
            return;
        }
        let within = |m: &BTreeMap<OpAddr, OpState>| -> Vec<OpAddr> {
            m.range((subtree_start(&prefix), Bound::Unbounded))
                .take_while(|(a, _)| a.within(&prefix))
                .map(|(a, _)| a.clone())
                .collect()
        };
        for a in within(&self.ops) {
            let op = self.ops.remove(&a).expect("listed op");
            io.event(self.qid(), Some(&a), EventKind::Terminate);
            self.runnable.remove(&a);
            self.discard(io, &a, op);
        }
        let keys: Vec<OpAddr> = self
            .trackers
            .range((subtree_start(&prefix), Bound::Unbounded))
            .take_while(|(a, _)| a.within(&prefix))
            .map(|(a, _)| a.clone())
            .collect();
        for k in keys {
            self.trackers.remove(&k);
        }
        let done: Vec<OpAddr> = self
            .completed
            .range((subtree_start(&prefix), Bound::Unbounded))
            .take_while(|a| a.within(&prefix))
            .cloned()
            .collect();
        for a in done {
            self.completed.remove(&a);
        }
        self.scope_ops.retain(|c| !(c.len() >= prefix.len() && c[..prefix.len()] == prefix[..]));
        let mut freed = Vec::new();
        for (sc, l) in self.live.iter_mut() {
            let before = l.len();
            l.retain(|t| {
                let inside = tag.is_prefix_of(t);
                if inside {
                    freed.push((*sc, t.clone()));
                }
                !inside
            });
            debug_assert!(l.len() <= before);
        }
        for (sc, t) in freed {
            io.event(self.qid(), None, EventKind::SiDone { scope: sc, tag: t });
            self.wake(io, sc);
        }
    }

    fn complete_query(&mut self, io: &mut Io) {
        let q = self.qid();
        if self.shared.is_done() {
            return self.terminate_all(io);
        }
        // Sends first: the query must not look quiescent before they exist.
        for x in 0..io.num_execs {
            if x != io.exec {
                self.send(io, x, Envelope::TerminateQuery { query: q });
            }
        }
        if self.shared.finish(io.now) {
            io.event(q, None, EventKind::QueryDone);
        }
        self.terminate_all(io);
    }

    fn terminate_all(&mut self, io: &mut Io) {
        if self.terminated {
            return;
        }
        self.terminated = true;
        for (a, op) in std::mem::take(&mut self.ops) {
            io.event(self.qid(), Some(&a), EventKind::Terminate);
            self.discard(io, &a, op);
        }
        self.runnable.clear();
        self.trackers.clear();
        self.completed.clear();
        self.tombs.clear();
        self.scope_ops.clear();
        self.live.clear();
        self.waiters.clear();
        self.cancelled.clear();
        self.pool.clear();
        self.dirty = true;
    }

    fn flush_stats(&mut self) {
        if self.dirty {
            self.shared.merge_stats(&self.stats);
            self.stats = QueryStats::default();
            self.dirty = false;
        }
    }
}

fn vd_tablet(plan: &PhysicalPlan, v: VertexId, part: u32) -> Option<&crate::graph::Tablet> {
    plan.vertex(v).graph_accessing.then(|| plan.graph.tablet(part))
}

/// Units each runnable query received in one quantum.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct QuantumReport {
    /// (query, assigned share, units used), in creation order.
    pub roots: Vec<(QueryId, u64, u64)>,
    pub delivered: u64,
}

impl QuantumReport {
    pub fn processed(&self) -> u64 {
        self.roots.iter().map(|r| r.2).sum()
    }
}

/// One single-threaded executor owning an operator forest, one root per
/// installed query.
pub struct Executor {
    io: Io,
    inbox: VecDeque<Envelope>,
    queries: BTreeMap<QueryId, QueryRt>,
    load: LoadCounters,
    quota: u64,
    wall: Option<Instant>,
}

impl Executor {
    pub fn new(exec: ExecId, num_execs: u32, quota: u64, batch: usize, trace: bool) -> Executor {
        Executor {
            io: Io {
                exec,
                num_execs,
                now: 0,
                batch: batch.max(1),
                outbox: vec![Vec::new(); num_execs as usize],
                ready: Vec::new(),
                local: VecDeque::new(),
                trace: trace.then(Vec::new),
                senders: None,
            },
            inbox: VecDeque::new(),
            queries: BTreeMap::new(),
            load: LoadCounters::default(),
            quota: quota.max(1),
            wall: None,
        }
    }

    /// Threaded mode: full batches go straight to the peers' channels and
    /// quota is measured in microseconds since `start`.
    pub fn connect(&mut self, senders: Vec<Sender<Vec<Envelope>>>, start: Instant) {
        self.io.senders = Some(senders);
        self.wall = Some(start);
    }

    pub fn id(&self) -> ExecId {
        self.io.exec
    }

    pub fn push(&mut self, batch: impl IntoIterator<Item = Envelope>) {
        self.inbox.extend(batch);
    }

    pub fn has_input(&self) -> bool {
        !self.inbox.is_empty()
    }

    pub fn load(&self) -> &LoadCounters {
        &self.load
    }

    pub fn take_trace(&mut self) -> Vec<TraceEvent> {
        self.io.trace.as_mut().map(std::mem::take).unwrap_or_default()
    }

    fn deliver(&mut self, env: Envelope) {
        let q = env.query();
        if let Envelope::Install { plan, shared, .. } = &env {
            self.queries.entry(q).or_insert_with(|| QueryRt::new(plan.clone(), shared.clone()));
            return;
        }
        let rt = self.queries.get_mut(&q).expect("queries are installed before their first message");
        rt.deliver(&mut self.io, env);
    }

    fn drain_local(&mut self) {
        while let Some(env) = self.io.local.pop_front() {
            self.deliver(env);
        }
    }

    fn clock(&self) -> u64 {
        self.wall.map_or(self.io.now, |s| s.elapsed().as_micros() as u64)
    }

    /// Delivers pending input, then runs the roots with equal shares of the
    /// quota; inside a root the highest-priority operator runs first,
    /// re-evaluated after every item. `start_tick` is the deterministic
    /// clock at quantum start (ignored in threaded mode).
    pub fn run_quantum(&mut self, start_tick: u64) -> QuantumReport {
        self.io.now = if self.wall.is_some() { self.clock() } else { start_tick };
        let mut report = QuantumReport::default();
        while let Some(env) = self.inbox.pop_front() {
            report.delivered += 1;
            self.deliver(env);
            self.drain_local();
        }
        let roots: Vec<QueryId> =
            self.queries.iter().filter(|(_, rt)| !rt.terminated && !rt.runnable.is_empty()).map(|(q, _)| *q).collect();
        let shares = assign_quota(self.quota, roots.len(), QuotaPolicy::EqualShare);
        for (q, share) in roots.into_iter().zip(shares) {
            let begin = Instant::now();
            let mut used = 0;
            while used < share {
                let rt = self.queries.get_mut(&q).expect("root");
                if rt.terminated {
                    break;
                }
                let Some(addr) = rt.pick() else { break };
                rt.process_one(&mut self.io, &addr, &mut self.load);
                self.drain_local();
                if self.wall.is_some() {
                    self.io.now = self.clock();
                    used = begin.elapsed().as_micros() as u64;
                } else {
                    self.io.now += 1;
                    used += 1;
                }
            }
            report.roots.push((q, share, used));
        }
        self.load.backlog = self.queries.values().map(|rt| rt.ops.values().map(|o| o.mailbox.len() as u64).sum::<u64>()).sum();
        for rt in self.queries.values_mut() {
            rt.flush_stats();
        }
        report
    }

    /// Batches produced since the last call, per destination.
    pub fn take_outgoing(&mut self) -> Vec<(ExecId, Vec<Envelope>)> {
        let mut out = std::mem::take(&mut self.io.ready);
        for (to, b) in self.io.outbox.iter_mut().enumerate() {
            if !b.is_empty() {
                out.push((to as ExecId, std::mem::take(b)));
            }
        }
        out
    }

    /// Threaded mode: sends every partial batch.
    pub fn flush(&mut self) {
        let out = self.take_outgoing();
        if let Some(s) = &self.io.senders {
            for (to, b) in out {
                let _ = s[to as usize].send(b);
            }
        }
    }
}
