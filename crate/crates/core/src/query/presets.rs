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

//! Named query presets over the social schema.
//!
//! `store(companies)` side effects are expressed as constant sets computed
//! before the query starts. Repeat loops with `times` hand every traverser
//! of the last iteration to the next step regardless of `emit`, so presets
//! that only want emitted persons repeat the emit condition as a filter.

use std::collections::BTreeMap;

use crate::graph::{Cmp, Direction, NeighborTarget, PropValue, VertexPredicate};

use super::ir::{Arg, QueryIR, SetDecl, Step};
use super::QueryError;

pub const PRESETS: [&str; 7] = ["example1", "cq1", "cq2", "cq3", "cq4", "cq5", "cq6"];

fn adj(dir: Direction, label: &str) -> Step {
    Step::Adjacent { dir, label: label.to_string() }
}

fn knows() -> Step {
    adj(Direction::Out, "knows")
}

fn source() -> Step {
    Step::Source { vtype: "Person".into(), ids: vec![Arg::Param("$person_id".into())] }
}

fn limit() -> Step {
    Step::Limit { n: Arg::Param("$n".into()) }
}

fn repeat(body: Vec<Step>, times: u32, emit: Option<VertexPredicate>) -> Step {
    Step::Repeat {
        body,
        times: Some(times),
        until: None,
        max_loops: None,
        emit,
        inter: "fifo".into(),
        intra: "fifo".into(),
    }
}

pub(crate) fn where_(sub: Vec<Step>) -> Step {
    Step::Where { sub, cancellable: true, inter: "fifo".into(), intra: "fifo".into(), max_si: None }
}

fn works_with_start() -> VertexPredicate {
    VertexPredicate::has_neighbor(Direction::Out, "workAt", NeighborTarget::InSet { set: "companies".into() })
}

fn companies() -> SetDecl {
    SetDecl { name: "companies".into(), steps: vec![adj(Direction::Out, "workAt")] }
}

/// Persons with a post tagged with a tag of a country-like class.
fn country_poster() -> Step {
    where_(vec![
        adj(Direction::In, "hasCreator"),
        adj(Direction::Out, "hasTag"),
        adj(Direction::Out, "hasType"),
        Step::Filter { pred: VertexPredicate::prop("name", Cmp::Contains, PropValue::Str("Country".into())) },
    ])
}

fn query(name: &str, sets: Vec<SetDecl>, steps: Vec<Step>, extra: &[(&str, i64)]) -> QueryIR {
    let mut params = BTreeMap::from([("person_id".to_string(), 0), ("n".to_string(), 10)]);
    for (k, v) in extra {
        params.insert(k.to_string(), *v);
    }
    QueryIR { name: name.into(), params, sets, steps, root_policy: "fifo".into() }
}

pub fn preset(name: &str) -> Result<QueryIR, QueryError> {
    Ok(match name {
        // Friends within five hops working at a given company who posted
        // with tag `#t1`.
        "example1" => {
            let until = VertexPredicate::has_neighbor(Direction::Out, "workAt", NeighborTarget::Vertex {
                vtype: "Company".into(),
                id: 0,
            });
            let steps = vec![
                source(),
                Step::Repeat {
                    body: vec![knows()],
                    times: None,
                    until: Some(until),
                    max_loops: Some(5),
                    emit: None,
                    inter: "fifo".into(),
                    intra: "fifo".into(),
                },
                where_(vec![
                    adj(Direction::In, "hasCreator"),
                    adj(Direction::Out, "hasTag"),
                    Step::Filter { pred: VertexPredicate::prop("name", Cmp::Eq, PropValue::Str("#t1".into())) },
                ]),
                limit(),
            ];
            query(name, vec![], steps, &[])
        }
        "cq1" => query(name, vec![], vec![source(), repeat(vec![knows()], 5, None), Step::Dedup, limit()], &[]),
        "cq2" => query(
            name,
            vec![companies()],
            vec![
                source(),
                repeat(vec![knows()], 5, Some(works_with_start())),
                Step::Filter { pred: works_with_start() },
                Step::Dedup,
                limit(),
            ],
            &[],
        ),
        "cq3" => query(
            name,
            vec![],
            vec![
                source(),
                knows(),
                Step::Union { branches: vec![vec![], vec![knows()]] },
                Step::Dedup,
                country_poster(),
                limit(),
            ],
            &[],
        ),
        "cq4" => query(
            name,
            vec![companies()],
            vec![
                source(),
                knows(),
                where_(vec![
                    repeat(vec![knows()], 4, Some(works_with_start())),
                    Step::Filter { pred: works_with_start() },
                    Step::Dedup,
                ]),
                limit(),
            ],
            &[],
        ),
        "cq5" => query(
            name,
            vec![companies()],
            vec![
                source(),
                repeat(vec![knows()], 5, Some(works_with_start())),
                Step::Filter { pred: works_with_start() },
                Step::Dedup,
                country_poster(),
                limit(),
            ],
            &[],
        ),
        "cq6" => query(
            name,
            vec![],
            vec![source(), repeat(vec![knows(), country_poster()], 5, None), Step::Dedup, limit()],
            &[],
        ),
        other => return Err(QueryError::UnknownPreset(other.to_string())),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataflow::{validate_dataflow, ScopeKind};
    use crate::query::compile;

    #[test]
    fn presets_compile_both_ways() {
        for name in PRESETS {
            let q = preset(name).unwrap();
            q.validate().unwrap();
            for scopes in [true, false] {
                let df = compile(&q, scopes).unwrap_or_else(|e| panic!("{name}: {e}"));
                assert!(validate_dataflow(&df).is_ok(), "{name}");
            }
        }
        assert!(preset("cq9").is_err());
    }

    #[test]
    fn cq6_nests_branch_in_loop() {
        let df = compile(&preset("cq6").unwrap(), true).unwrap();
        let b = df.scopes.iter().find(|s| s.kind == ScopeKind::Branch).unwrap();
        assert_eq!(b.depth, 2);
    }
}
