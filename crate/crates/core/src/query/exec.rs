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
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dataflow::{LogicalDataflow, PolicyRegistry};
use crate::graph::{ConstSets, PartitionedGraph, RoutingTable, Vid};
use crate::runtime::{Engine, QueryOutcome};

use super::compile::compile;
use super::ir::{Arg, Params, QueryIR, Step};
use super::plan::{parallelize, PhysicalPlan};
use super::QueryError;

/// How a query is turned into a physical plan.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompileOptions {
    pub scopes: bool,
    /// Operators per pure (non graph-accessing) vertex.
    pub pure_parallelism: u32,
    /// Overrides the policies of every scope.
    pub inter: Option<String>,
    pub intra: Option<String>,
    pub root: Option<String>,
    /// Overrides Max_SI of every branch scope.
    pub max_si: Option<u32>,
}

impl Default for CompileOptions {
    fn default() -> CompileOptions {
        CompileOptions { scopes: true, pure_parallelism: 1, inter: None, intra: None, root: None, max_si: None }
    }
}

impl CompileOptions {
    fn apply(&self, df: &mut LogicalDataflow) {
        if let Some(r) = &self.root {
            df.root_intra_policy = r.clone();
        }
        for s in &mut df.scopes {
            if let Some(p) = &self.inter {
                s.inter_si_policy = p.clone();
            }
            if let Some(p) = &self.intra {
                s.intra_si_policy = p.clone();
            }
            if self.max_si.is_some() && s.kind == crate::dataflow::ScopeKind::Branch {
                s.max_si = self.max_si;
            }
        }
    }
}

fn start_vertices(q: &QueryIR, graph: &PartitionedGraph) -> Result<Vec<Vid>, QueryError> {
    let Some(Step::Source { vtype, ids }) = q.steps.first() else {
        return Err(QueryError::Invalid("a query starts with a source step".into()));
    };
    let mut out = Vec::new();
    for a in ids {
        if let Some(v) = graph.graph().lookup_named(vtype, a.value()?) {
            out.push(v);
        }
    }
    Ok(out)
}

/// Prologue: evaluates each declared set from the start vertices, reading
/// adjacency through the owning tablets.
fn const_sets(q: &QueryIR, graph: &PartitionedGraph, start: &[Vid]) -> Result<ConstSets, QueryError> {
    let mut sets = ConstSets::new();
    for decl in &q.sets {
        let mut cur: BTreeSet<Vid> = start.iter().copied().collect();
        for s in &decl.steps {
            let mut next = BTreeSet::new();
            for &v in &cur {
                let tablet = graph.tablet(graph.route(v));
                match s {
                    Step::Adjacent { dir, label } => {
                        let l = if label.is_empty() {
                            None
                        } else {
                            match graph.graph().label_id(label) {
                                Some(l) => Some(l),
                                None => continue,
                            }
                        };
                        let ns = tablet.neighbors(graph.graph(), v, *dir, l).map_err(|e| QueryError::Invalid(e.to_string()))?;
                        next.extend(ns.into_iter().map(|(n, _)| n));
                    }
                    Step::Filter { pred } => {
                        if pred.eval(graph.graph(), tablet, v, &sets).map_err(|e| QueryError::Invalid(e.to_string()))? {
                            next.insert(v);
                        }
                    }
                    _ => return Err(QueryError::Invalid("set steps may only be adjacent or filter".into())),
                }
            }
            cur = next;
        }
        sets.insert(decl.name.clone(), cur);
    }
    Ok(sets)
}

/// Binds, compiles and parallelizes `q` against one routing snapshot.
pub fn prepare(
    q: &QueryIR,
    params: &Params,
    graph: &Arc<PartitionedGraph>,
    routing: Arc<RoutingTable>,
    opts: &CompileOptions,
    reg: &PolicyRegistry,
) -> Result<Arc<PhysicalPlan>, QueryError> {
    let bound = q.bind(params)?;
    let mut df = compile(&bound, opts.scopes)?;
    opts.apply(&mut df);
    let mut plan = parallelize(df, graph.clone(), routing, opts.pure_parallelism, reg)?;
    plan.start = start_vertices(&bound, graph)?;
    plan.sets = const_sets(&bound, graph, &plan.start)?;
    Ok(Arc::new(plan))
}

/// Runs one plan to completion on a deterministic engine.
pub fn execute(engine: &mut Engine, plan: Arc<PhysicalPlan>) -> QueryOutcome {
    let q = engine.submit(plan);
    engine.run(q)
}

/// Literal start ids of a query, for reports.
pub fn source_ids(q: &QueryIR) -> Vec<i64> {
    match q.steps.first() {
        Some(Step::Source { ids, .. }) => ids.iter().filter_map(|a| if let Arg::Lit(v) = a { Some(*v) } else { None }).collect(),
        _ => Vec::new(),
    }
}
