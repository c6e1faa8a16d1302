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

//! Brute-force reference evaluator. Works on the unpartitioned graph with
//! its own adjacency index and predicate evaluation, so that it shares
//! nothing with the dataflow path it is used to check.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::graph::{Direction, NeighborTarget, PropertyGraph, VertexPredicate, Vid};
use crate::runtime::Value;

use super::ir::{Arg, QueryIR, Step};

struct Oracle<'g> {
    g: &'g PropertyGraph,
    out: HashMap<Vid, Vec<(u16, Vid)>>,
    inn: HashMap<Vid, Vec<(u16, Vid)>>,
    sets: BTreeMap<String, BTreeSet<Vid>>,
}

impl<'g> Oracle<'g> {
    fn new(g: &'g PropertyGraph) -> Oracle<'g> {
        let mut out: HashMap<Vid, Vec<(u16, Vid)>> = HashMap::new();
        let mut inn: HashMap<Vid, Vec<(u16, Vid)>> = HashMap::new();
        for e in g.edges() {
            out.entry(e.src).or_default().push((e.label, e.dst));
            inn.entry(e.dst).or_default().push((e.label, e.src));
        }
        Oracle { g, out, inn, sets: BTreeMap::new() }
    }

    fn adj(&self, v: Vid, dir: Direction, label: &str) -> Vec<Vid> {
        let list = match dir {
            Direction::Out => self.out.get(&v),
            Direction::In => self.inn.get(&v),
        };
        let Some(list) = list else { return Vec::new() };
        if label.is_empty() {
            return list.iter().map(|(_, w)| *w).collect();
        }
        match self.g.label_id(label) {
            Some(l) => list.iter().filter(|(x, _)| *x == l).map(|(_, w)| *w).collect(),
            None => Vec::new(),
        }
    }

    fn holds(&self, p: &VertexPredicate, v: Vid) -> bool {
        match p {
            VertexPredicate::True => true,
            VertexPredicate::HasType { vtype } => self.g.vertex_type_name(v) == vtype,
            VertexPredicate::Prop { key, cmp, value } => match self.g.prop(v, key) {
                Some(x) => cmp.holds(x, value),
                None => false,
            },
            VertexPredicate::HasNeighbor { dir, label, target } => {
                let ns = self.adj(v, *dir, label);
                if label.is_empty() {
                    // An empty label never names an edge type.
                    return false;
                }
                match target {
                    NeighborTarget::Any => !ns.is_empty(),
                    NeighborTarget::Vertex { vtype, id } => {
                        let w = self.g.lookup_named(vtype, *id);
                        w.is_some_and(|w| ns.contains(&w))
                    }
                    NeighborTarget::InSet { set } => {
                        self.sets.get(set).is_some_and(|s| ns.iter().any(|w| s.contains(w)))
                    }
                }
            }
            VertexPredicate::And { all } => all.iter().all(|q| self.holds(q, v)),
            VertexPredicate::Or { any } => any.iter().any(|q| self.holds(q, v)),
            VertexPredicate::Not { inner } => !self.holds(inner, v),
        }
    }

    fn order_key(&self, v: Vid) -> (String, i64) {
        let r = self.g.vertex_ref(v);
        (self.g.vertex_type_name(v).to_string(), r.id)
    }

    fn sorted(&self, mut vs: Vec<Vid>) -> Vec<Vid> {
        vs.sort_by_cached_key(|v| self.order_key(*v));
        vs
    }

    fn eval(&self, steps: &[Step], input: Vec<Vid>) -> Vec<Vid> {
        let mut cur = input;
        for s in steps {
            cur = match s {
                Step::Source { .. } => unreachable!("source is the first step"),
                Step::Adjacent { dir, label } => cur.iter().flat_map(|v| self.adj(*v, *dir, label)).collect(),
                Step::Filter { pred } => cur.into_iter().filter(|v| self.holds(pred, *v)).collect(),
                Step::Dedup => {
                    let mut seen = BTreeSet::new();
                    let uniq: Vec<Vid> = cur.into_iter().filter(|v| seen.insert(*v)).collect();
                    self.sorted(uniq)
                }
                Step::Limit { n } => {
                    let n = n.value().expect("bound query") as usize;
                    self.sorted(cur).into_iter().take(n).collect()
                }
                Step::Count => unreachable!("count is handled by the caller"),
                Step::Repeat { body, times, until, max_loops, emit, .. } => {
                    self.repeat(body, *times, until.as_ref(), *max_loops, emit.as_ref(), cur)
                }
                Step::Where { sub, .. } => {
                    let mut memo: HashMap<Vid, bool> = HashMap::new();
                    cur.into_iter()
                        .filter(|v| *memo.entry(*v).or_insert_with(|| !self.eval(sub, vec![*v]).is_empty()))
                        .collect()
                }
                Step::Union { branches } => branches.iter().flat_map(|b| self.eval(b, cur.clone())).collect(),
            };
        }
        cur
    }

    /// Layer by layer: layer k holds the traversers entering iteration k.
    fn repeat(
        &self,
        body: &[Step],
        times: Option<u32>,
        until: Option<&VertexPredicate>,
        max_loops: Option<u32>,
        emit: Option<&VertexPredicate>,
        input: Vec<Vid>,
    ) -> Vec<Vid> {
        let mut out = Vec::new();
        let mut layer = input;
        let mut k = 1u32;
        while !layer.is_empty() {
            let mut next = Vec::new();
            for v in self.eval(body, layer) {
                let emitted = emit.is_some_and(|p| self.holds(p, v));
                if let Some(t) = times {
                    if k >= t {
                        out.push(v);
                        continue;
                    }
                    if emitted {
                        out.push(v);
                    }
                    next.push(v);
                } else if until.is_some_and(|p| self.holds(p, v)) {
                    out.push(v);
                } else {
                    if emitted {
                        out.push(v);
                    }
                    if max_loops.is_none_or(|m| k < m) {
                        next.push(v);
                    }
                }
            }
            layer = next;
            k += 1;
        }
        out
    }
}

/// Result multiset of a bound query. A final limit keeps the first `n`
/// results in (vertex type, id) order.
pub fn oracle_eval(q: &QueryIR, graph: &PropertyGraph) -> Vec<Value> {
    let mut o = Oracle::new(graph);
    let Some(Step::Source { vtype, ids }) = q.steps.first() else {
        return Vec::new();
    };
    let start: Vec<Vid> = ids
        .iter()
        .filter_map(|a| match a {
            Arg::Lit(id) => graph.lookup_named(vtype, *id),
            Arg::Param(_) => None,
        })
        .collect();
    for s in &q.sets {
        let set: BTreeSet<Vid> = o.eval(&s.steps, start.clone()).into_iter().collect();
        o.sets.insert(s.name.clone(), set);
    }
    let rest = &q.steps[1..];
    if let Some(c) = rest.iter().position(|s| matches!(s, Step::Count)) {
        let n = o.eval(&rest[..c], start).len() as u64;
        return vec![Value::Count(n)];
    }
    o.eval(rest, start).into_iter().map(Value::Vertex).collect()
}

/// The query without its final limit.
pub fn unlimited(q: &QueryIR) -> QueryIR {
    let mut u = q.clone();
    if matches!(u.steps.last(), Some(Step::Limit { .. })) {
        u.steps.pop();
    }
    u
}

fn multiset(vs: &[Value]) -> BTreeMap<&Value, usize> {
    let mut m = BTreeMap::new();
    for v in vs {
        *m.entry(v).or_default() += 1;
    }
    m
}

/// Checks engine results against the oracle. Without a limit the two
/// multisets must be equal; with `limit(n)` every result must come from the
/// unlimited oracle multiset and there must be exactly `min(n, |oracle|)`.
pub fn check_results(q: &QueryIR, graph: &PropertyGraph, got: &[Value]) -> Result<(), String> {
    let full = oracle_eval(&unlimited(q), graph);
    let want = multiset(&full);
    let have = multiset(got);
    match q.limit() {
        None => {
            if want != have {
                let missing: Vec<_> = want.iter().filter(|(v, n)| have.get(*v) != Some(n)).take(5).collect();
                let extra: Vec<_> = have.iter().filter(|(v, n)| want.get(*v) != Some(n)).take(5).collect();
                return Err(format!(
                    "expected {} results, got {}; oracle-side mismatches {missing:?}, engine-side {extra:?}",
                    full.len(),
                    got.len()
                ));
            }
        }
        Some(n) => {
            let expect = (n as usize).min(full.len());
            if got.len() != expect {
                return Err(format!("limit {n}: expected {expect} results, got {}", got.len()));
            }
            for (v, c) in &have {
                if want.get(v).copied().unwrap_or(0) < *c {
                    return Err(format!("limit {n}: {v:?} is not an oracle result"));
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate, Cmp, GenSpec, PropValue};

    fn src(id: i64) -> Step {
        Step::Source { vtype: "Person".into(), ids: vec![Arg::Lit(id)] }
    }

    fn out() -> Step {
        Step::Adjacent { dir: Direction::Out, label: "knows".into() }
    }

    fn times(body: Vec<Step>, k: u32) -> Step {
        Step::Repeat {
            body,
            times: Some(k),
            until: None,
            max_loops: None,
            emit: None,
            inter: "fifo".into(),
            intra: "fifo".into(),
        }
    }

    fn vids(vs: &[Value]) -> Vec<Vid> {
        vs.iter()
            .map(|v| match v {
                Value::Vertex(x) => *x,
                Value::Count(_) => panic!("count"),
            })
            .collect()
    }

    #[test]
    fn repeat_dedup_on_cycle_reaches_all() {
        let g = generate(&GenSpec::Cycle { n: 3 }, 0);
        // Five steps on a 3-cycle from 0 end on vertex 2 only, but emitting
        // every layer visits all three.
        let q = QueryIR::new(vec![src(0), times(vec![out()], 5), Step::Dedup]);
        assert_eq!(vids(&oracle_eval(&q, &g)), vec![2]);
        let mut r = times(vec![out()], 5);
        if let Step::Repeat { emit, .. } = &mut r {
            *emit = Some(VertexPredicate::True);
        }
        let q = QueryIR::new(vec![src(0), r, Step::Dedup]);
        assert_eq!(vids(&oracle_eval(&q, &g)), vec![0, 1, 2]);
    }

    #[test]
    fn count_and_empty_source() {
        let g = generate(&GenSpec::Path { n: 4 }, 0);
        let q = QueryIR::new(vec![src(1), Step::Count]);
        assert_eq!(oracle_eval(&q, &g), vec![Value::Count(1)]);
        let q = QueryIR::new(vec![src(99), out()]);
        assert!(oracle_eval(&q, &g).is_empty());
    }

    #[test]
    fn limit_takes_candidates_in_id_order() {
        let g = generate(&GenSpec::Star { n: 6 }, 0);
        let q = QueryIR::new(vec![src(0), out(), Step::Limit { n: Arg::Lit(3) }]);
        assert_eq!(vids(&oracle_eval(&q, &g)), vec![1, 2, 3]);
        let q = QueryIR::new(vec![src(0), out(), Step::Limit { n: Arg::Lit(30) }]);
        assert_eq!(oracle_eval(&q, &g).len(), 5);
    }

    #[test]
    fn where_is_existential() {
        let g = generate(&GenSpec::HeavyTweeter { candidates: 4, items: 5, match_pos: 5 }, 1);
        let tagged = Step::Filter { pred: VertexPredicate::prop("tag", Cmp::Eq, PropValue::Str("#ABC".into())) };
        let w = Step::Where {
            sub: vec![Step::Adjacent { dir: Direction::In, label: "hasCreator".into() }, tagged],
            cancellable: true,
            inter: "fifo".into(),
            intra: "fifo".into(),
            max_si: None,
        };
        let q = QueryIR::new(vec![src(0), out(), w]);
        assert_eq!(oracle_eval(&q, &g).len(), 4);
    }

    #[test]
    fn until_drops_at_bound() {
        let g = generate(&GenSpec::Path { n: 10 }, 0);
        let r = Step::Repeat {
            body: vec![out()],
            times: None,
            until: Some(VertexPredicate::prop("name", Cmp::Eq, PropValue::Str("p7".into()))),
            max_loops: Some(5),
            emit: None,
            inter: "fifo".into(),
            intra: "fifo".into(),
        };
        let q = QueryIR::new(vec![src(0), r.clone()]);
        assert!(oracle_eval(&q, &g).is_empty());
        let q = QueryIR::new(vec![src(3), r]);
        assert_eq!(vids(&oracle_eval(&q, &g)), vec![7]);
    }

    #[test]
    fn checker_applies_limit_rule() {
        let g = generate(&GenSpec::Star { n: 6 }, 0);
        let q = QueryIR::new(vec![src(0), out(), Step::Limit { n: Arg::Lit(2) }]);
        assert!(check_results(&q, &g, &[Value::Vertex(5), Value::Vertex(3)]).is_ok());
        assert!(check_results(&q, &g, &[Value::Vertex(5)]).is_err());
        assert!(check_results(&q, &g, &[Value::Vertex(5), Value::Vertex(0)]).is_err());
    }
}
