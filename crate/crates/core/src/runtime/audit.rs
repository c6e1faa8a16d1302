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

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use crate::dataflow::ScopeId;
use crate::graph::ExecId;
use crate::query::PhysicalPlan;

use super::address::OpAddr;
use super::message::QueryId;
use super::trace::{EventKind, TraceEvent};

/// Findings of a trace audit.
#[derive(Clone, Debug, Default)]
pub struct AuditReport {
    pub violations: Vec<String>,
    pub created: usize,
    pub completed: usize,
    pub terminated: usize,
    pub processed: usize,
    /// Highest number of live instances seen, per (query, scope).
    pub peak_live: BTreeMap<(QueryId, ScopeId), usize>,
}

impl AuditReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    fn violate(&mut self, msg: String) {
        if self.violations.len() < 50 {
            self.violations.push(msg);
        }
    }
}

#[derive(Default)]
struct OpLife {
    created: u32,
    ended: u32,
    queued: i64,
}

/// Replays a trace and checks, per executor and query:
/// - every operator is created at most once and ends (completes or is
///   terminated) exactly once, with nothing processed afterwards;
/// - no fault events;
/// - the query completes exactly once, unless the driver aborted it;
/// - live Max_SI instances never exceed the scope's limit;
/// - with `check_order`, every processed operator had no runnable operator
///   of the same query outranking it.
pub fn audit_trace(events: &[TraceEvent], plans: &BTreeMap<QueryId, Arc<PhysicalPlan>>, check_order: bool) -> AuditReport {
    let mut r = AuditReport::default();
    let mut ops: HashMap<(ExecId, QueryId, OpAddr), OpLife> = HashMap::new();
    let mut live: HashMap<(ExecId, QueryId, ScopeId), usize> = HashMap::new();
    let mut runnable: HashMap<(ExecId, QueryId), BTreeMap<OpAddr, i64>> = HashMap::new();
    let mut done: HashMap<QueryId, u32> = HashMap::new();
    let mut aborted = std::collections::HashSet::new();
    for e in events {
        let q = e.query;
        if let EventKind::Fault(m) = &e.kind {
            r.violate(format!("fault: {m}"));
            continue;
        }
        match &e.kind {
            EventKind::SiEnter { scope, tag } => {
                let n = live.entry((e.exec, q, *scope)).or_default();
                *n += 1;
                let peak = r.peak_live.entry((q, *scope)).or_default();
                *peak = (*peak).max(*n);
                let limit = plans.get(&q).and_then(|p| p.df.scope(*scope).max_si);
                if let Some(m) = limit {
                    if *n > m as usize {
                        r.violate(format!("exec {} q{q}: {n} live instances of scope {scope} at {tag} (max {m})", e.exec));
                    }
                }
                continue;
            }
            EventKind::SiDone { scope, .. } => {
                let n = live.entry((e.exec, q, *scope)).or_default();
                *n = n.saturating_sub(1);
                continue;
            }
            EventKind::Terminate if e.addr.is_none() => {
                aborted.insert(q);
                continue;
            }
            EventKind::QueryDone => {
                *done.entry(q).or_default() += 1;
                continue;
            }
            _ => {}
        }
        let Some(addr) = &e.addr else { continue };
        if addr.part == u32::MAX {
            continue;
        }
        let key = (e.exec, q, addr.clone());
        let life = ops.entry(key).or_default();
        match &e.kind {
            EventKind::Create => {
                life.created += 1;
                r.created += 1;
                if life.created > 1 {
                    r.violate(format!("exec {} q{q}: {addr} created twice", e.exec));
                }
            }
            EventKind::Enq { .. } => {
                if life.ended > 0 {
                    r.violate(format!("exec {} q{q}: {addr} received input after it ended", e.exec));
                }
                life.queued += 1;
                *runnable.entry((e.exec, q)).or_default().entry(addr.clone()).or_default() += 1;
            }
            EventKind::Process { .. } => {
                r.processed += 1;
                if life.ended > 0 || life.created == 0 {
                    r.violate(format!("exec {} q{q}: {addr} processed outside its lifetime", e.exec));
                }
                life.queued -= 1;
                let set = runnable.entry((e.exec, q)).or_default();
                if check_order {
                    if let Some(plan) = plans.get(&q) {
                        let tag = addr.tag();
                        for (other, n) in set.iter() {
                            if *n > 0 && other != addr {
                                let ot = other.tag();
                                if plan.sched.compare((other.vertex, &ot), (addr.vertex, &tag)).is_lt() {
                                    r.violate(format!(
                                        "exec {} q{q} tick {}: processed {addr} while {other} outranked it",
                                        e.exec, e.tick
                                    ));
                                    break;
                                }
                            }
                        }
                    }
                }
                let n = set.entry(addr.clone()).or_default();
                *n -= 1;
                if *n <= 0 {
                    set.remove(addr);
                }
            }
            EventKind::Discard { items } => {
                life.queued -= *items as i64;
                if let Some(set) = runnable.get_mut(&(e.exec, q)) {
                    set.remove(addr);
                }
            }
            EventKind::Complete | EventKind::Terminate => {
                life.ended += 1;
                if matches!(e.kind, EventKind::Complete) {
                    r.completed += 1;
                } else {
                    r.terminated += 1;
                }
                if life.ended > 1 {
                    r.violate(format!("exec {} q{q}: {addr} ended twice", e.exec));
                }
                if let Some(set) = runnable.get_mut(&(e.exec, q)) {
                    set.remove(addr);
                }
            }
            _ => {}
        }
    }
    for ((x, q, a), life) in &ops {
        if life.created == 1 && life.ended != 1 {
            r.violate(format!("exec {x} q{q}: {a} never completed nor terminated"));
        }
    }
    for q in plans.keys() {
        match done.get(q).copied().unwrap_or(0) {
            1 => {}
            0 if aborted.contains(q) => {}
            n => r.violate(format!("q{q}: {n} completion events")),
        }
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataflow::PolicyRegistry;
    use crate::graph::{generate, partition, GenSpec, RoutingTable, VertexPredicate};
    use crate::query::{prepare, Arg, CompileOptions, Params, QueryIR, Step};
    use crate::runtime::{Engine, EngineConfig};

    fn traced() -> (Vec<TraceEvent>, BTreeMap<QueryId, Arc<PhysicalPlan>>) {
        let pg = Arc::new(partition(Arc::new(generate(&GenSpec::Cycle { n: 6 }, 0)), 4, 0));
        let q = QueryIR::new(vec![
            Step::Source { vtype: "Person".into(), ids: vec![Arg::Lit(0), Arg::Lit(3)] },
            Step::Filter { pred: VertexPredicate::True },
        ]);
        let opts = CompileOptions::default();
        let plan = prepare(&q, &Params::new(), &pg, Arc::new(RoutingTable::round_robin(4, 2)), &opts, &PolicyRegistry::with_builtins())
            .unwrap();
        let mut e = Engine::new(EngineConfig { executors: 2, trace: true, ..EngineConfig::default() });
        let id = e.submit(plan.clone());
        e.run(id);
        (e.take_trace(), BTreeMap::from([(id, plan)]))
    }

    #[test]
    fn clean_run_passes() {
        let (t, p) = traced();
        let r = audit_trace(&t, &p, true);
        assert!(r.is_ok(), "{:?}", r.violations);
        assert!(r.created > 0 && r.completed + r.terminated == r.created);
    }

    #[test]
    fn processing_after_end_is_flagged() {
        let (mut t, p) = traced();
        let end = t.iter().position(|e| matches!(e.kind, EventKind::Complete | EventKind::Terminate)).unwrap();
        let mut late = t[end].clone();
        late.kind = EventKind::Process { data: true };
        t.push(late);
        assert!(!audit_trace(&t, &p, false).is_ok());
    }

    #[test]
    fn missing_or_double_completion_is_flagged() {
        let (t, p) = traced();
        let done = t.iter().position(|e| e.kind == EventKind::QueryDone).unwrap();
        let mut missing = t.clone();
        missing.remove(done);
        assert!(!audit_trace(&missing, &p, false).is_ok());
        let mut twice = t.clone();
        twice.push(t[done].clone());
        assert!(!audit_trace(&twice, &p, false).is_ok());
    }
}
