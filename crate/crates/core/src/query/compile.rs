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

use std::collections::BTreeSet;

use crate::dataflow::{
    validate_dataflow, Access, LogicalDataflow, LoopExit, OperatorSpec, PartitionFn, ScopeDecl, ScopeId, ScopeKind,
    VertexId, MAX_SCOPE_DEPTH,
};

use super::ir::{QueryIR, Step};
use super::QueryError;

/// Output ports feeding whatever comes next.
type Frontier = Vec<(VertexId, u8)>;

struct Builder {
    df: LogicalDataflow,
    scopes: bool,
    /// Enclosing scopes, outermost first.
    stack: Vec<ScopeId>,
    region: Option<u32>,
    regions: u32,
    /// Untagged where-subqueries currently open (scopes off).
    open_wheres: u32,
}

fn partition_for(op: &OperatorSpec, access: Access) -> PartitionFn {
    match op {
        OperatorSpec::Egress => PartitionFn::ByTag,
        OperatorSpec::WhereExit { .. } => PartitionFn::ByTraversal,
        o if o.is_singleton() => PartitionFn::Single,
        _ if access == Access::GraphAccessing => PartitionFn::ByVertex,
        _ => PartitionFn::ForwardLocal,
    }
}

impl Builder {
    fn add(&mut self, name: &str, op: OperatorSpec) -> VertexId {
        let v = self.df.add_vertex(name, op);
        if !self.df.vertex(v).op.is_system() {
            self.df.vertices[v as usize].region = self.region;
        }
        for s in &self.stack {
            self.df.scopes[*s as usize].internal.insert(v);
        }
        v
    }

    fn link(&mut self, from: &Frontier, to: VertexId) {
        let vd = self.df.vertex(to);
        let p = partition_for(&vd.op, vd.access);
        for &(v, port) in from {
            self.df.add_edge(v, to, port, false, p);
        }
    }

    fn then(&mut self, cur: &Frontier, name: &str, op: OperatorSpec) -> Frontier {
        let v = self.add(name, op);
        self.link(cur, v);
        vec![(v, 0)]
    }

    fn open_scope(&mut self, kind: ScopeKind, inter: &str, intra: &str, max_si: Option<u32>) -> Result<(ScopeId, VertexId), QueryError> {
        let depth = self.stack.len() + 1;
        if depth > MAX_SCOPE_DEPTH {
            return Err(QueryError::Compile(format!("scopes nested deeper than {MAX_SCOPE_DEPTH}")));
        }
        let name = match kind {
            ScopeKind::Branch => "branch-ingress",
            ScopeKind::Loop => "loop-ingress",
        };
        let ing = self.add(name, OperatorSpec::Ingress);
        let id = self.df.scopes.len() as ScopeId;
        self.df.scopes.push(ScopeDecl {
            id,
            kind,
            ingress: ing,
            // Patched when the scope closes.
            egress: ing,
            internal: BTreeSet::new(),
            depth: depth as u32,
            max_si,
            inter_si_policy: inter.to_string(),
            intra_si_policy: intra.to_string(),
        });
        self.stack.push(id);
        Ok((id, ing))
    }

    fn close_scope(&mut self, id: ScopeId, name: &str) -> VertexId {
        let popped = self.stack.pop();
        debug_assert_eq!(popped, Some(id));
        let eg = self.add(name, OperatorSpec::Egress);
        self.df.scopes[id as usize].egress = eg;
        eg
    }

    fn steps(&mut self, steps: &[Step], mut cur: Frontier) -> Result<Frontier, QueryError> {
        for s in steps {
            cur = self.step(s, cur)?;
        }
        Ok(cur)
    }

    fn step(&mut self, s: &Step, cur: Frontier) -> Result<Frontier, QueryError> {
        Ok(match s {
            Step::Source { .. } => return Err(QueryError::Invalid("source is only allowed as the first step".into())),
            Step::Adjacent { dir, label } => {
                let name = if label.is_empty() { format!("{dir}") } else { format!("{dir}({label})") };
                self.then(&cur, &name, OperatorSpec::Expand { dir: *dir, label: label.clone() })
            }
            Step::Filter { pred } => self.then(&cur, "filter", OperatorSpec::Filter { pred: pred.clone() }),
            // Dedup does not change whether a where-subquery yields anything;
            // without instances there is no per-traversal dedup to use.
            Step::Dedup if self.open_wheres > 0 => cur,
            Step::Dedup => self.then(&cur, "dedup", OperatorSpec::Dedup),
            Step::Count => self.then(&cur, "count", OperatorSpec::Count),
            Step::Limit { .. } => cur,
            Step::Repeat { body, times, until, max_loops, emit, inter, intra } => {
                let exit = match (times, until) {
                    (Some(t), _) => LoopExit::Times { times: *t },
                    (None, Some(c)) => LoopExit::Until { cond: c.clone(), max_loops: *max_loops },
                    (None, None) => return Err(QueryError::Invalid("repeat without exit".into())),
                };
                if self.scopes {
                    self.looped(body, exit, emit.clone(), inter, intra, cur)?
                } else {
                    self.unrolled(body, exit, emit.clone(), cur)?
                }
            }
            Step::Where { sub, cancellable, inter, intra, max_si } => {
                let saved = self.region;
                self.region = Some(self.regions);
                self.regions += 1;
                let out = if self.scopes {
                    self.branch(sub, *cancellable, inter, intra, *max_si, cur)
                } else {
                    self.tracked(sub, *cancellable, cur)
                };
                self.region = saved;
                out?
            }
            Step::Union { branches } => {
                let mut out = Frontier::new();
                for b in branches {
                    out.extend(self.steps(b, cur.clone())?);
                }
                out
            }
        })
    }

    fn looped(
        &mut self,
        body: &[Step],
        exit: LoopExit,
        emit: Option<crate::graph::VertexPredicate>,
        inter: &str,
        intra: &str,
        cur: Frontier,
    ) -> Result<Frontier, QueryError> {
        let (id, ing) = self.open_scope(ScopeKind::Loop, inter, intra, None)?;
        self.link(&cur, ing);
        let end = self.steps(body, vec![(ing, 0)])?;
        let tail = self.add("loop-tail", OperatorSpec::LoopTail { exit, emit, iteration: None });
        self.link(&end, tail);
        let eg = self.close_scope(id, "loop-egress");
        self.df.add_edge(tail, eg, 0, false, PartitionFn::ByTag);
        self.df.add_edge(tail, ing, 1, true, PartitionFn::ForwardLocal);
        Ok(vec![(eg, 0)])
    }

    fn unrolled(
        &mut self,
        body: &[Step],
        exit: LoopExit,
        emit: Option<crate::graph::VertexPredicate>,
        cur: Frontier,
    ) -> Result<Frontier, QueryError> {
        let Some(bound) = exit.bound() else {
            return Err(QueryError::Compile("an until loop without max_loops cannot run with scopes off".into()));
        };
        let mut exits = Frontier::new();
        let mut c = cur;
        for i in 1..=bound {
            let end = self.steps(body, c)?;
            let tail = self.add(&format!("loop-tail#{i}"), OperatorSpec::LoopTail {
                exit: exit.clone(),
                emit: emit.clone(),
                iteration: Some(i),
            });
            self.link(&end, tail);
            exits.push((tail, 0));
            c = vec![(tail, 1)];
        }
        Ok(exits)
    }

    fn branch(
        &mut self,
        sub: &[Step],
        cancellable: bool,
        inter: &str,
        intra: &str,
        max_si: Option<u32>,
        cur: Frontier,
    ) -> Result<Frontier, QueryError> {
        let (id, ing) = self.open_scope(ScopeKind::Branch, inter, intra, max_si)?;
        self.link(&cur, ing);
        let mut end = self.steps(sub, vec![(ing, 0)])?;
        if cancellable {
            let plain = match end.as_slice() {
                [(v, 0)] => !self.df.vertex(*v).op.is_system() && *v != ing,
                _ => false,
            };
            if !plain {
                end = self.then(&end, "first-match", OperatorSpec::Identity);
            }
            self.df.vertices[end[0].0 as usize].cancel_trigger = true;
        }
        let eg = self.close_scope(id, "branch-egress");
        self.link(&end, eg);
        Ok(vec![(eg, 0)])
    }

    fn tracked(&mut self, sub: &[Step], cancellable: bool, cur: Frontier) -> Result<Frontier, QueryError> {
        let region = self.region.take();
        let enter = self.then(&cur, "where-enter", OperatorSpec::WhereEnter);
        self.region = region;
        self.open_wheres += 1;
        let end = self.steps(sub, enter)?;
        self.open_wheres -= 1;
        self.region = None;
        let out = self.then(&end, "where-exit", OperatorSpec::WhereExit { cancellable });
        self.region = region;
        Ok(out)
    }
}

/// Compiles a query into a logical dataflow. With `scopes` off, loops are
/// unrolled into one pipeline and where-subqueries track traversals by id
/// instead of running in branch scope instances.
pub fn compile(q: &QueryIR, scopes: bool) -> Result<LogicalDataflow, QueryError> {
    q.validate()?;
    let mut b = Builder {
        df: LogicalDataflow {
            vertices: Vec::new(),
            edges: Vec::new(),
            scopes: Vec::new(),
            root_intra_policy: q.root_policy.clone(),
        },
        scopes,
        stack: Vec::new(),
        region: None,
        regions: 0,
        open_wheres: 0,
    };
    let src = b.add("source", OperatorSpec::Source);
    let end = b.steps(&q.steps[1..], vec![(src, 0)])?;
    let sink = b.add("sink", OperatorSpec::Sink { limit: q.limit() });
    b.link(&end, sink);
    let report = validate_dataflow(&b.df);
    if !report.is_ok() {
        return Err(QueryError::Compile(format!("compiled dataflow is invalid: {report}")));
    }
    Ok(b.df)
}
