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

use smallvec::{smallvec, SmallVec};

use crate::dataflow::{LoopExit, OperatorSpec};
use crate::graph::{ConstSets, GraphError, LabelId, PartitionedGraph, Tablet, VertexPredicate};

use super::message::{Payload, Traverser};

/// Output of one DATA message: (port, payload) pairs in send order.
pub type Outputs = SmallVec<[(u8, Payload); 4]>;

/// What a stateless vertex needs to process one traverser.
pub struct Ctx<'a> {
    pub graph: &'a PartitionedGraph,
    /// The operator's tablet, for graph-accessing vertices.
    pub tablet: Option<&'a Tablet>,
    pub sets: &'a ConstSets,
    pub label: Option<LabelId>,
    /// Loop iteration, read from the tag of a looping operator.
    pub iteration: Option<u32>,
}

impl Ctx<'_> {
    fn holds(&self, pred: &VertexPredicate, t: &Traverser) -> Result<bool, GraphError> {
        let tablet = self.tablet.expect("predicates run on graph-accessing operators");
        pred.eval(self.graph.graph(), tablet, t.vertex, self.sets)
    }
}

/// Runs a stateless operator on one traverser.
pub fn run_stateless(spec: &OperatorSpec, ctx: &Ctx<'_>, t: Traverser) -> Result<Outputs, GraphError> {
    let mut out = Outputs::new();
    match spec {
        OperatorSpec::Source => {
            let tablet = ctx.tablet.expect("source is graph-accessing");
            if !tablet.owns(t.vertex) {
                return Err(GraphError::RoutingFault { tablet: tablet.id(), vertex: t.vertex });
            }
            out.push((0, Payload::Trav(t)));
        }
        OperatorSpec::Expand { dir, .. } => {
            let tablet = ctx.tablet.expect("expand is graph-accessing");
            let label = ctx.label;
            if label == Some(LabelId::MAX) {
                tablet.adjacency(t.vertex, *dir)?;
                return Ok(out);
            }
            for (n, _) in tablet.neighbors(ctx.graph.graph(), t.vertex, *dir, label)? {
                out.push((0, Payload::Trav(t.moved(n))));
            }
        }
        OperatorSpec::Filter { pred } => {
            if ctx.holds(pred, &t)? {
                out.push((0, Payload::Trav(t)));
            }
        }
        OperatorSpec::LoopTail { exit, emit, iteration } => {
            let k = iteration.or(ctx.iteration).expect("loop tail knows its iteration");
            let emitted = match emit {
                Some(p) => ctx.holds(p, &t)?,
                None => false,
            };
            match exit {
                LoopExit::Times { times } => {
                    if k >= *times {
                        out.push((0, Payload::Trav(t)));
                    } else {
                        if emitted {
                            out.push((0, Payload::Trav(t.clone())));
                        }
                        out.push((1, Payload::Trav(t)));
                    }
                }
                LoopExit::Until { cond, max_loops } => {
                    if ctx.holds(cond, &t)? {
                        out.push((0, Payload::Trav(t)));
                    } else {
                        if emitted {
                            out.push((0, Payload::Trav(t.clone())));
                        }
                        if max_loops.is_none_or(|m| k < m) {
                            out.push((1, Payload::Trav(t)));
                        }
                    }
                }
            }
        }
        OperatorSpec::Identity => out.push((0, Payload::Trav(t))),
        other => unreachable!("{other:?} is not stateless"),
    }
    Ok(out)
}

/// Port-0 output of a single payload.
pub fn forward(p: Payload) -> Outputs {
    smallvec![(0, p)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate, partition, Direction, GenSpec};
    use std::sync::Arc;

    fn path_ctx() -> (PartitionedGraph, ConstSets) {
        let g = generate(&GenSpec::Path { n: 4 }, 1);
        (partition(Arc::new(g), 1, 0), ConstSets::new())
    }

    #[test]
    fn expand_follows_out_edges() {
        let (pg, sets) = path_ctx();
        let ctx = Ctx { graph: &pg, tablet: Some(pg.tablet(0)), sets: &sets, label: None, iteration: None };
        let spec = OperatorSpec::Expand { dir: Direction::Out, label: String::new() };
        let out = run_stateless(&spec, &ctx, Traverser::at(0)).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].1.vertex(), Some(1));
    }

    #[test]
    fn times_exit_and_emit() {
        let (pg, sets) = path_ctx();
        let spec = OperatorSpec::LoopTail {
            exit: LoopExit::Times { times: 2 },
            emit: Some(VertexPredicate::True),
            iteration: None,
        };
        let ports = |k| {
            let ctx = Ctx { graph: &pg, tablet: Some(pg.tablet(0)), sets: &sets, label: None, iteration: Some(k) };
            run_stateless(&spec, &ctx, Traverser::at(1)).unwrap().iter().map(|(p, _)| *p).collect::<Vec<_>>()
        };
        assert_eq!(ports(1), vec![0, 1]);
        assert_eq!(ports(2), vec![0]);
    }

    #[test]
    fn until_guard_drops_at_bound() {
        let (pg, sets) = path_ctx();
        let spec = OperatorSpec::LoopTail {
            exit: LoopExit::Until { cond: VertexPredicate::Not { inner: Box::new(VertexPredicate::True) }, max_loops: Some(3) },
            emit: None,
            iteration: None,
        };
        let ctx = Ctx { graph: &pg, tablet: Some(pg.tablet(0)), sets: &sets, label: None, iteration: Some(3) };
        assert!(run_stateless(&spec, &ctx, Traverser::at(1)).unwrap().is_empty());
    }

    #[test]
    fn misrouted_source_is_a_fault() {
        let g = generate(&GenSpec::Path { n: 40 }, 1);
        let pg = partition(Arc::new(g), 4, 0);
        let v = (0..40).find(|v| pg.route(*v) != 0).unwrap();
        let sets = ConstSets::new();
        let ctx = Ctx { graph: &pg, tablet: Some(pg.tablet(0)), sets: &sets, label: None, iteration: None };
        assert!(run_stateless(&OperatorSpec::Source, &ctx, Traverser::at(v)).is_err());
    }
}
