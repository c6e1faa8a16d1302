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

use std::sync::Arc;

use scopeflow::dataflow::PolicyRegistry;
use scopeflow::graph::{generate, partition, Direction, GenSpec, PartitionedGraph, RoutingTable};
use scopeflow::query::{check_results, execute, prepare, preset, Arg, CompileOptions, Params, QueryIR, Step};
use scopeflow::runtime::{Engine, EngineConfig, QueryOutcome, Status, ThreadedEngine, Value};

fn setup(spec: &GenSpec, tablets: usize, execs: u32) -> (Arc<PartitionedGraph>, Arc<RoutingTable>) {
    let g = generate(spec, 7);
    let pg = Arc::new(partition(Arc::new(g), tablets, 3));
    (pg, Arc::new(RoutingTable::round_robin(tablets, execs as usize)))
}

fn run(q: &QueryIR, params: &Params, spec: &GenSpec, execs: u32, scopes: bool) -> (QueryOutcome, Arc<PartitionedGraph>) {
    let (pg, rt) = setup(spec, 8, execs);
    let opts = CompileOptions { scopes, ..CompileOptions::default() };
    let plan = prepare(q, params, &pg, rt, &opts, &PolicyRegistry::with_builtins()).unwrap();
    let mut e = Engine::new(EngineConfig { executors: execs, ..EngineConfig::default() });
    (execute(&mut e, plan), pg)
}

fn src(id: i64) -> Step {
    Step::Source { vtype: "Person".into(), ids: vec![Arg::Lit(id)] }
}

#[test]
fn source_count_is_one() {
    let q = QueryIR::new(vec![src(2), Step::Count]);
    for x in [1, 2, 4] {
        let (o, _) = run(&q, &Params::new(), &GenSpec::Path { n: 5 }, x, true);
        assert_eq!(o.status, Status::Completed, "{:?}", o.faults);
        assert_eq!(o.results, vec![Value::Count(1)]);
    }
}

#[test]
fn repeat_times_on_cycle() {
    let r = Step::Repeat {
        body: vec![Step::Adjacent { dir: Direction::Out, label: "knows".into() }],
        times: Some(5),
        until: None,
        max_loops: None,
        emit: None,
        inter: "fifo".into(),
        intra: "fifo".into(),
    };
    let q = QueryIR::new(vec![src(0), r, Step::Dedup]);
    for x in [1, 2, 4] {
        for scopes in [true, false] {
            let (o, pg) = run(&q, &Params::new(), &GenSpec::Cycle { n: 3 }, x, scopes);
            assert_eq!(o.status, Status::Completed, "{:?}", o.faults);
            check_results(&q, pg.graph(), &o.results).unwrap();
        }
    }
}

#[test]
fn presets_match_oracle() {
    let spec = GenSpec::Social { persons: 60, avg_knows: 3, companies: 4, posts_per_person: 2, tags: 10 };
    for name in scopeflow::query::PRESETS {
        let q = preset(name).unwrap();
        for x in [1, 2, 4] {
            for scopes in [true, false] {
                let params = Params::from([("person_id".to_string(), 3), ("n".to_string(), 1000)]);
                let (o, pg) = run(&q, &params, &spec, x, scopes);
                assert_eq!(o.status, Status::Completed, "{name} x{x} scopes={scopes}: {:?}", o.faults);
                let bound = q.bind(&params).unwrap();
                check_results(&bound, pg.graph(), &o.results).unwrap_or_else(|e| panic!("{name} x{x} scopes={scopes}: {e}"));
            }
        }
    }
}

#[test]
fn threaded_engine_runs_concurrent_queries() {
    let spec = GenSpec::Social { persons: 80, avg_knows: 3, companies: 4, posts_per_person: 2, tags: 10 };
    let (pg, rt) = setup(&spec, 8, 4);
    let reg = PolicyRegistry::with_builtins();
    let mut e = ThreadedEngine::new(EngineConfig { executors: 4, quota: 200, ..EngineConfig::default() });
    let mut pending = Vec::new();
    for (i, name) in scopeflow::query::PRESETS.iter().enumerate() {
        let q = preset(name).unwrap();
        let params = Params::from([("person_id".to_string(), i as i64), ("n".to_string(), 5)]);
        for scopes in [true, false] {
            let opts = CompileOptions { scopes, pure_parallelism: 2, ..CompileOptions::default() };
            let plan = prepare(&q, &params, &pg, rt.clone(), &opts, &reg).unwrap();
            pending.push((q.bind(&params).unwrap(), e.submit(plan)));
        }
    }
    for (q, shared) in pending {
        let o = e.wait(&shared);
        assert_eq!(o.status, Status::Completed, "{}: {:?}", q.name, o.faults);
        check_results(&q, pg.graph(), &o.results).unwrap_or_else(|err| panic!("{}: {err}", q.name));
    }
    e.shutdown();
}

#[test]
fn dfs_loop_under_fifo_root_keeps_priority_order() {
    let knows = || Step::Adjacent { dir: Direction::Out, label: "knows".into() };
    let r = Step::Repeat {
        body: vec![knows(), Step::Filter { pred: scopeflow::graph::VertexPredicate::True }, knows()],
        times: Some(3),
        until: None,
        max_loops: None,
        emit: None,
        inter: "fifo".into(),
        intra: "dfs".into(),
    };
    let q = QueryIR::new(vec![Step::Source { vtype: "Person".into(), ids: [299, 298, 297].map(Arg::Lit).to_vec() }, r]);
    let pg = Arc::new(partition(Arc::new(generate(&GenSpec::PowerLaw { n: 300, m: 3 }, 11)), 4, 11));
    let rt = Arc::new(RoutingTable::round_robin(4, 1));
    let plan = prepare(&q, &Params::new(), &pg, rt, &CompileOptions::default(), &PolicyRegistry::with_builtins()).unwrap();
    let mut e = Engine::new(EngineConfig { executors: 1, quota: 4, trace: true, ..EngineConfig::default() });
    let id = e.submit(plan.clone());
    let o = e.run(id);
    assert_eq!(o.status, Status::Completed);
    let audit = scopeflow::runtime::audit_trace(&e.take_trace(), &std::collections::BTreeMap::from([(id, plan)]), true);
    assert!(audit.is_ok(), "{:?}", &audit.violations[..audit.violations.len().min(3)]);
}
