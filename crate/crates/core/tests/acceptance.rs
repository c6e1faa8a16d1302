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

//! Acceptance criteria. Each test prints one PASS/FAIL line, written straight
//! to stdout so it shows up without `--nocapture`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;
use std::sync::{Arc, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scopeflow::balance::{apply_migration, plan_migration, LoadVector};
use scopeflow::dataflow::{
    validate_dataflow, LogicalDataflow, OperatorSpec, PartitionFn, PolicyRegistry, ScopeDecl, ScopeId, ScopeKind,
    Violation,
};
use scopeflow::graph::{
    generate, partition, Cmp, Direction, ExecId, GenSpec, PartitionedGraph, PropValue, PropertyGraph, RoutingHandle,
    RoutingTable, VertexPredicate,
};
use scopeflow::query::{
    check_results, compile, prepare, preset, Arg, CompileOptions, Params, PhysicalPlan, QueryIR, Step, PRESETS,
};
use scopeflow::runtime::{audit_trace, Engine, EngineConfig, EventKind, QueryId, QueryOutcome, Status, TraceEvent};

fn line(n: u32, pass: bool, what: &str, detail: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "acceptance {n} {}: {what} [{detail}]", if pass { "PASS" } else { "FAIL" });
}

fn params(person: i64, n: i64) -> Params {
    Params::from([("person_id".to_string(), person), ("n".to_string(), n)])
}

fn source(ids: &[i64]) -> Step {
    Step::Source { vtype: "Person".into(), ids: ids.iter().copied().map(Arg::Lit).collect() }
}

fn out(label: &str) -> Step {
    Step::Adjacent { dir: Direction::Out, label: label.into() }
}

fn repeat(body: Vec<Step>, times: u32, inter: &str, intra: &str) -> Step {
    Step::Repeat { body, times: Some(times), until: None, max_loops: None, emit: None, inter: inter.into(), intra: intra.into() }
}

/// Audit results of runs, reused by the quiescence criterion.
#[derive(Default)]
struct Audits {
    runs: usize,
    failures: Vec<String>,
}

impl Audits {
    fn check(&mut self, ctx: &str, o: &QueryOutcome, trace: &[TraceEvent], plans: &BTreeMap<QueryId, Arc<PhysicalPlan>>, order: bool) {
        self.runs += 1;
        let r = audit_trace(trace, plans, order);
        if !r.is_ok() && self.failures.len() < 20 {
            self.failures.push(format!("{ctx}: {:?}", &r.violations[..r.violations.len().min(3)]));
        }
        if r.created != r.completed + r.terminated && self.failures.len() < 20 {
            self.failures.push(format!("{ctx}: {} created, {} ended", r.created, r.completed + r.terminated));
        }
        if o.completion_tick.is_none() && self.failures.len() < 20 {
            self.failures.push(format!("{ctx}: root scope never completed"));
        }
    }
}

/// Submits `plan` alone and runs it with tracing on.
fn run_traced(plan: Arc<PhysicalPlan>, cfg: EngineConfig) -> (QueryOutcome, Vec<TraceEvent>, BTreeMap<QueryId, Arc<PhysicalPlan>>) {
    let mut e = Engine::new(EngineConfig { trace: true, ..cfg });
    let q = e.submit(plan.clone());
    let o = e.run(q);
    assert!(e.shared(q).in_flight() == 0, "in-flight counter not drained");
    (o, e.take_trace(), BTreeMap::from([(q, plan)]))
}

fn setup(g: PropertyGraph, tablets: usize, seed: u64) -> Arc<PartitionedGraph> {
    Arc::new(partition(Arc::new(g), tablets, seed))
}

// ---------------------------------------------------------------------------
// 1: oracle equivalence

struct Outcome {
    pass: bool,
    detail: String,
    audits: Audits,
}

const COMBOS: [(&str, &str); 6] = [("fifo", "fifo"), ("bfs", "dfs"), ("dfs", "bfs"), ("bfs", "fifo"), ("fifo", "dfs"), ("dfs", "dfs")];
const PAIRS: usize = 200;

fn oracle_runs() -> &'static Outcome {
    static C: OnceLock<Outcome> = OnceLock::new();
    C.get_or_init(|| {
        let reg = PolicyRegistry::with_builtins();
        let mut rng = ChaCha8Rng::seed_from_u64(20_261_014);
        let mut audits = Audits::default();
        let mut bad = Vec::new();
        let mut per_template: BTreeMap<&str, usize> = BTreeMap::new();
        let mut max_vertices = 0;
        for i in 0..PAIRS {
            let persons = rng.gen_range(30..=120);
            let spec = GenSpec::Social {
                persons,
                avg_knows: rng.gen_range(2..=5),
                companies: rng.gen_range(2..=6),
                posts_per_person: rng.gen_range(1..=3),
                tags: rng.gen_range(6..=16),
            };
            let g = generate(&spec, rng.gen());
            max_vertices = max_vertices.max(g.num_vertices());
            let pg = setup(g, 16, i as u64);
            for (t, name) in PRESETS.iter().enumerate() {
                let q = preset(name).unwrap();
                let p = params(rng.gen_range(0..persons as i64), [1, 2, 3, 5, 10, 1000][rng.gen_range(0..6)]);
                let bound = q.bind(&p).unwrap();
                let (inter, intra) = COMBOS[(i + t) % COMBOS.len()];
                let max_si = [Some(1), Some(2), None, None][(i + t) % 4];
                for x in [1u32, 2, 4, 8] {
                    let rt = Arc::new(RoutingTable::round_robin(16, x as usize));
                    for scopes in [true, false] {
                        let opts = CompileOptions {
                            scopes,
                            pure_parallelism: x,
                            inter: Some(inter.into()),
                            intra: Some(intra.into()),
                            root: Some(intra.into()),
                            max_si,
                        };
                        let plan = prepare(&q, &p, &pg, rt.clone(), &opts, &reg).unwrap();
                        let cfg = EngineConfig {
                            executors: x,
                            quota: 8 + (i as u64 % 5) * 12,
                            shuffle: i % 3 == 0,
                            seed: i as u64,
                            ..EngineConfig::default()
                        };
                        let ctx = format!("{name} pair {i} x{x} {inter}/{intra} max_si={max_si:?} scopes={scopes} {p:?}");
                        let (o, trace, plans) = run_traced(plan, cfg);
                        let ok = o.status == Status::Completed && check_results(&bound, pg.graph(), &o.results).is_ok();
                        if !ok && bad.len() < 10 {
                            bad.push(format!("{ctx}: {:?} {:?}", o.status, check_results(&bound, pg.graph(), &o.results).err()));
                        }
                        audits.check(&ctx, &o, &trace, &plans, false);
                    }
                }
                *per_template.entry(name).or_default() += 1;
            }
        }
        let pass = bad.is_empty() && per_template.values().all(|n| *n >= PAIRS) && max_vertices <= 1000;
        let detail = format!(
            "{} templates x {PAIRS} pairs, {} runs, largest graph {max_vertices} vertices{}",
            per_template.len(),
            audits.runs,
            if bad.is_empty() { String::new() } else { format!("; mismatches: {bad:?}") }
        );
        Outcome { pass, detail, audits }
    })
}

#[test]
fn criterion_1_oracle_equivalence() {
    let o = oracle_runs();
    line(1, o.pass, "engine results equal the oracle", &o.detail);
    assert!(o.pass, "{}", o.detail);
}

// ---------------------------------------------------------------------------
// 2: early cancellation

fn cancellation_runs() -> &'static Outcome {
    static C: OnceLock<Outcome> = OnceLock::new();
    C.get_or_init(|| {
        let reg = PolicyRegistry::with_builtins();
        let pg = setup(generate(&GenSpec::HeavyTweeter { candidates: 100, items: 1000, match_pos: 1 }, 5), 8, 5);
        let q = QueryIR::new(vec![
            source(&[0]),
            out("knows"),
            Step::Where {
                sub: vec![
                    Step::Adjacent { dir: Direction::In, label: "hasCreator".into() },
                    Step::Filter { pred: VertexPredicate::prop("tag", Cmp::Eq, PropValue::Str("#ABC".into())) },
                ],
                cancellable: true,
                inter: "fifo".into(),
                intra: "fifo".into(),
                max_si: None,
            },
        ]);
        let mut audits = Audits::default();
        let mut pass = true;
        let mut detail = Vec::new();
        // Asserted on one executor; more executors add a round of
        // cancellation latency per hop and are reported only.
        for x in [1u32, 2, 4] {
            let rt = Arc::new(RoutingTable::round_robin(8, x as usize));
            let mut got = Vec::new();
            for scopes in [true, false] {
                let opts = CompileOptions { scopes, pure_parallelism: x, ..CompileOptions::default() };
                let plan = prepare(&q, &Params::new(), &pg, rt.clone(), &opts, &reg).unwrap();
                let region = plan.df.vertices.iter().find_map(|v| v.region).expect("where region");
                let (o, trace, plans) = run_traced(plan, EngineConfig { executors: x, ..EngineConfig::default() });
                pass &= o.status == Status::Completed && o.results.len() == 100 && check_results(&q, pg.graph(), &o.results).is_ok();
                audits.check(&format!("heavy tweeter x{x} scopes={scopes}"), &o, &trace, &plans, false);
                got.push((o.stats.region(region), o.stats.processed()));
            }
            let [(on_r, on_t), (off_r, off_t)] = [got[0], got[1]];
            let (rr, tr) = (on_r as f64 / off_r as f64, off_t as f64 / on_t as f64);
            if x == 1 {
                pass &= rr <= 0.05 && tr >= 10.0;
            }
            detail.push(format!(
                "x{x}: where messages {on_r} vs {off_r} ({:.2}%), end-to-end {on_t} vs {off_t} ({tr:.1}x less)",
                rr * 100.0
            ));
        }
        Outcome { pass, detail: detail.join("; "), audits }
    })
}

#[test]
fn criterion_2_early_cancellation_saves_work() {
    let o = cancellation_runs();
    line(2, o.pass, "cancellable branch scopes cut where-subquery work", &o.detail);
    assert!(o.pass, "{}", o.detail);
}

// ---------------------------------------------------------------------------
// 3: scheduling order

fn loop_scope(plan: &PhysicalPlan) -> ScopeId {
    plan.df.scopes.iter().find(|s| s.kind == ScopeKind::Loop).expect("loop scope").id
}

/// Iteration ordinal of a scheduling event inside the loop scope: an
/// operator of the instance processing, completing or terminating, or the
/// instance finishing. Deliveries into a mailbox are the sender's doing.
fn iteration(e: &TraceEvent, s: ScopeId) -> Option<u32> {
    match &e.kind {
        EventKind::SiDone { scope, tag } if *scope == s => tag.elements().last().copied(),
        EventKind::Process { .. } | EventKind::Complete | EventKind::Terminate => {
            e.addr.as_ref()?.chain.iter().find(|(sc, _)| *sc == s).map(|(_, o)| *o)
        }
        _ => None,
    }
}

/// Replays mailbox sizes and returns every step where an operator was
/// processed while a downstream operator of the same instance had input.
fn dfs_inversions(trace: &[TraceEvent], plan: &PhysicalPlan) -> Vec<String> {
    let mut queued: HashMap<_, i64> = HashMap::new();
    let mut bad = Vec::new();
    for e in trace {
        let Some(a) = &e.addr else { continue };
        if a.part == u32::MAX {
            continue;
        }
        match e.kind {
            EventKind::Enq { .. } => *queued.entry(a.clone()).or_default() += 1,
            EventKind::Discard { items } => *queued.entry(a.clone()).or_default() -= items as i64,
            EventKind::Process { .. } => {
                let d = plan.topo.distance[a.vertex as usize];
                for (b, n) in &queued {
                    if *n > 0 && b.chain == a.chain && !a.chain.is_empty() && plan.topo.distance[b.vertex as usize] > d {
                        bad.push(format!("tick {}: {a} ran while downstream {b} had {n} queued", e.tick));
                    }
                }
                *queued.entry(a.clone()).or_default() -= 1;
            }
            _ => {}
        }
    }
    bad
}

fn order_runs() -> &'static Outcome {
    static C: OnceLock<Outcome> = OnceLock::new();
    C.get_or_init(|| {
        let reg = PolicyRegistry::with_builtins();
        let pg = setup(generate(&GenSpec::PowerLaw { n: 300, m: 3 }, 11), 4, 11);
        let rt = Arc::new(RoutingTable::round_robin(4, 1));
        let cfg = EngineConfig { executors: 1, quota: 4, ..EngineConfig::default() };
        let mut audits = Audits::default();

        // Inter-instance BFS over a three-iteration loop.
        let q = QueryIR::new(vec![source(&[299, 298]), repeat(vec![out("knows")], 3, "bfs", "fifo")]);
        let plan = prepare(&q, &Params::new(), &pg, rt.clone(), &CompileOptions::default(), &reg).unwrap();
        let s = loop_scope(&plan);
        let (o, trace, plans) = run_traced(plan, cfg.clone());
        audits.check("bfs loop", &o, &trace, &plans, true);
        let seq: Vec<u32> = trace.iter().filter_map(|e| iteration(e, s)).collect();
        let monotone = seq.windows(2).all(|w| w[0] <= w[1]);
        let iters: BTreeSet<u32> = seq.iter().copied().collect();
        let bfs_ok = monotone && iters.len() == 3 && o.status == Status::Completed && check_results(&q, pg.graph(), &o.results).is_ok();

        // Intra-instance DFS: downstream operators of an iteration run first.
        let body = vec![out("knows"), Step::Filter { pred: VertexPredicate::True }, out("knows")];
        let q2 = QueryIR::new(vec![source(&[299, 298, 297]), repeat(body, 3, "fifo", "dfs")]);
        let plan2 = prepare(&q2, &Params::new(), &pg, rt, &CompileOptions::default(), &reg).unwrap();
        let (o2, trace2, plans2) = run_traced(plan2.clone(), cfg);
        audits.check("dfs loop", &o2, &trace2, &plans2, true);
        let inv = dfs_inversions(&trace2, &plan2);
        let processed = trace2.iter().filter(|e| matches!(e.kind, EventKind::Process { .. })).count();
        let dfs_ok = inv.is_empty() && o2.status == Status::Completed && check_results(&q2, pg.graph(), &o2.results).is_ok();

        let detail = format!(
            "bfs: {} loop events over iterations {iters:?}, ordered={monotone}; dfs: {processed} steps, {} inversions{}",
            seq.len(),
            inv.len(),
            inv.first().map(|s| format!(", first: {s}")).unwrap_or_default()
        );
        Outcome { pass: bfs_ok && dfs_ok, detail, audits }
    })
}

#[test]
fn criterion_3_scheduling_order() {
    let o = order_runs();
    line(3, o.pass, "BFS across iterations, DFS within an iteration", &o.detail);
    assert!(o.pass, "{}", o.detail);
}

// ---------------------------------------------------------------------------
// 4: quiescence

#[test]
fn criterion_4_quiescence_audit() {
    let all = [oracle_runs(), cancellation_runs(), order_runs()];
    let runs: usize = all.iter().map(|o| o.audits.runs).sum();
    let failures: Vec<&String> = all.iter().flat_map(|o| o.audits.failures.iter()).collect();
    let pass = failures.is_empty() && runs > 0;
    let detail = format!("{runs} audited runs, {} failing{}", failures.len(), failures.first().map(|f| format!(": {f}")).unwrap_or_default());
    line(4, pass, "every run completes, drains and ends each operator once", &detail);
    assert!(pass, "{failures:?}");
}

// ---------------------------------------------------------------------------
// 5: performance isolation

const ISO_QUOTA: u64 = 60;

fn light_query(p: i64) -> QueryIR {
    QueryIR::new(vec![source(&[p]), out("knows"), out("knows"), out("knows"), Step::Count])
}

fn heavy_query(p: i64) -> QueryIR {
    QueryIR::new(vec![source(&[p]), repeat(vec![out("knows")], 6, "fifo", "fifo"), Step::Count])
}

/// Completion latency of a light foreground query with `k` background
/// queries kept in flight.
fn isolated_latency(pg: &Arc<PartitionedGraph>, k: usize, heavy: bool) -> u64 {
    let reg = PolicyRegistry::with_builtins();
    let rt = Arc::new(RoutingTable::round_robin(pg.num_tablets(), 1));
    let plan = |q: &QueryIR| prepare(q, &Params::new(), pg, rt.clone(), &CompileOptions::default(), &reg).unwrap();
    let mut e = Engine::new(EngineConfig { executors: 1, quota: ISO_QUOTA, ..EngineConfig::default() });
    let mut next = 1i64;
    let mut background: Vec<QueryId> = Vec::new();
    let background_query = |p: i64| if heavy { heavy_query(p) } else { light_query(p) };
    for _ in 0..k {
        background.push(e.submit(plan(&background_query(next))));
        next += 1;
    }
    let fg = e.submit(plan(&light_query(0)));
    while !e.is_finished(fg) {
        e.step();
        for b in &mut background {
            if e.is_finished(*b) {
                *b = e.submit(plan(&background_query(next)));
                next += 1;
            }
        }
    }
    let o = e.outcome(fg);
    assert_eq!(o.status, Status::Completed);
    o.latency().unwrap()
}

#[test]
fn criterion_5_performance_isolation() {
    let pg = setup(generate(&GenSpec::Social { persons: 600, avg_knows: 6, companies: 4, posts_per_person: 1, tags: 8 }, 3), 8, 3);
    let t = isolated_latency(&pg, 0, true);
    let mut pass = true;
    let mut detail = vec![format!("solo T={t}")];
    for k in [1usize, 2, 4] {
        let heavy = isolated_latency(&pg, k, true);
        let light = isolated_latency(&pg, k, false);
        let bound = (k as u64 + 1) * t + 2 * ISO_QUOTA;
        pass &= heavy <= bound && light <= bound && heavy.abs_diff(light) <= ISO_QUOTA;
        detail.push(format!("K={k}: heavy bg {heavy}, light bg {light}, bound {bound}"));
    }
    line(5, pass, "light query latency under concurrent load", &detail.join("; "));
    assert!(pass, "{detail:?}");
}

// ---------------------------------------------------------------------------
// 6: Max_SI and overhead

#[test]
fn criterion_6_max_si_and_overhead() {
    let reg = PolicyRegistry::with_builtins();
    let g = generate(&GenSpec::Social { persons: 150, avg_knows: 4, companies: 4, posts_per_person: 3, tags: 12 }, 8);
    let pg = setup(g, 16, 8);
    let mut pass = true;
    let mut peak = 0;
    let mut runs = 0;
    for name in ["example1", "cq3", "cq4", "cq5", "cq6"] {
        let q = preset(name).unwrap();
        for person in [0i64, 7, 42] {
            let p = params(person, 1000);
            for x in [1u32, 2, 4] {
                let rt = Arc::new(RoutingTable::round_robin(16, x as usize));
                let opts = CompileOptions { max_si: Some(1), pure_parallelism: x, ..CompileOptions::default() };
                let plan = prepare(&q, &p, &pg, rt, &opts, &reg).unwrap();
                let branch: BTreeSet<ScopeId> = plan.df.scopes.iter().filter(|s| s.kind == ScopeKind::Branch).map(|s| s.id).collect();
                let (o, trace, plans) = run_traced(plan, EngineConfig { executors: x, quota: 16, ..EngineConfig::default() });
                let r = audit_trace(&trace, &plans, false);
                let here = r.peak_live.iter().filter(|((_, s), _)| branch.contains(s)).map(|(_, n)| *n).max().unwrap_or(0);
                peak = peak.max(here);
                pass &= r.is_ok() && here <= 1 && o.status == Status::Completed;
                pass &= check_results(&q.bind(&p).unwrap(), pg.graph(), &o.results).is_ok();
                runs += 1;
            }
        }
    }
    let mut detail = vec![format!("{runs} runs with Max_SI=1, peak live instances {peak}")];

    // No early exit anywhere: loops only, and a where that keeps every branch.
    let full_where = Step::Where {
        sub: vec![Step::Adjacent { dir: Direction::In, label: "hasCreator".into() }],
        cancellable: false,
        inter: "fifo".into(),
        intra: "fifo".into(),
        max_si: None,
    };
    let workloads = [
        ("cq1", preset("cq1").unwrap()),
        ("cq2", preset("cq2").unwrap()),
        ("keep-all where", QueryIR::new(vec![source(&[0]), out("knows"), out("knows"), full_where])),
    ];
    for (name, q) in workloads {
        for x in [1u32, 4] {
            let rt = Arc::new(RoutingTable::round_robin(16, x as usize));
            let mut cost = Vec::new();
            // Scopes on (default and Max_SI=1), then off.
            for (scopes, max_si) in [(true, None), (true, Some(1)), (false, None)] {
                let opts = CompileOptions { scopes, max_si, pure_parallelism: x, ..CompileOptions::default() };
                let plan = prepare(&q, &params(0, 1_000_000), &pg, rt.clone(), &opts, &reg).unwrap();
                let mut e = Engine::new(EngineConfig { executors: x, quota: 16, ..EngineConfig::default() });
                let id = e.submit(plan);
                let o = e.run(id);
                pass &= o.status == Status::Completed;
                cost.push((o.latency().unwrap_or(u64::MAX), o.stats.processed(), o.stats.ops_created));
            }
            let ratio = cost[0].0 as f64 / cost[2].0 as f64;
            let serial = cost[1].0 as f64 / cost[2].0 as f64;
            pass &= ratio < 2.0;
            detail.push(format!(
                "{name} x{x}: ticks {} vs {} ({ratio:.2}x; {serial:.2}x at Max_SI=1), messages {} vs {}, operators {} vs {}",
                cost[0].0, cost[2].0, cost[0].1, cost[2].1, cost[0].2, cost[2].2
            ));
        }
    }
    line(6, pass, "Max_SI=1 holds; scope overhead stays under 2x ticks", &detail.join("; "));
    assert!(pass, "{detail:?}");
}

// ---------------------------------------------------------------------------
// 7: load balancing

const EXECS: u32 = 8;
const TABLETS: usize = 64;
const WINDOW: u64 = 32;

/// `per` Person ids from every tablet, so each tablet gets the same load.
fn uniform_ids(pg: &PartitionedGraph, per: usize) -> Vec<i64> {
    let g = pg.graph();
    let mut by_tablet: BTreeMap<u32, Vec<i64>> = BTreeMap::new();
    for id in 0.. {
        let Some(v) = g.lookup_named("Person", id) else { break };
        let t = by_tablet.entry(pg.route(v)).or_default();
        if t.len() < per {
            t.push(id);
        }
    }
    assert!(by_tablet.len() == TABLETS && by_tablet.values().all(|v| v.len() == per), "graph too small for {per} per tablet");
    by_tablet.into_values().flatten().collect()
}

#[test]
fn criterion_7_load_balancing() {
    let reg = PolicyRegistry::with_builtins();
    let g = generate(&GenSpec::Social { persons: 2048, avg_knows: 3, companies: 6, posts_per_person: 1, tags: 10 }, 21);
    let pg = setup(g, TABLETS, 21);
    let owners: Vec<ExecId> = (0..TABLETS as u32).map(|t| if t < 48 { t / 12 } else { 4 + (t - 48) / 4 }).collect();
    let handle = RoutingHandle::new(RoutingTable::from_owners(owners, EXECS as usize));
    let scan = QueryIR::new(vec![
        Step::Source { vtype: "Person".into(), ids: uniform_ids(&pg, 8).into_iter().map(Arg::Lit).collect() },
        Step::Filter { pred: VertexPredicate::Not { inner: Box::new(VertexPredicate::True) } },
    ]);
    let plan_now = |h: &RoutingHandle| prepare(&scan, &Params::new(), &pg, h.snapshot(), &CompileOptions::default(), &reg).unwrap();

    // Open-loop stream: one scan at the start of every window, light enough
    // that even the overloaded executors finish it within the window.
    let mut e = Engine::new(EngineConfig { executors: EXECS, quota: 64, ..EngineConfig::default() });
    let mut scans = Vec::new();
    let mut window = |e: &mut Engine, h: &RoutingHandle, hook: &mut dyn FnMut(u64)| {
        scans.push(e.submit(plan_now(h)));
        let before = e.loads();
        for r in 0..WINDOW {
            hook(r);
            e.step();
        }
        LoadVector::between(&h.snapshot(), &before, &e.loads(), 0)
    };
    window(&mut e, &handle, &mut |_| {});
    let skewed = window(&mut e, &handle, &mut |_| {});
    let moves = plan_migration(&skewed, 1.2);
    // Migrate while this window's scan is running on the old owners.
    let mut migrated_in_flight = false;
    window(&mut e, &handle, &mut |r| {
        if r == 4 {
            for m in &moves {
                apply_migration(&handle, *m);
            }
            migrated_in_flight = true;
        }
    });
    let snap = handle.snapshot();
    let owned: Vec<usize> = (0..EXECS).map(|x| snap.tablets_of(x).len()).collect();
    let after = window(&mut e, &handle, &mut |_| {});
    e.run_all();
    let scans_ok = scans.iter().all(|q| e.outcome(*q).status == Status::Completed) && migrated_in_flight;
    let processed: Vec<u64> = after.execs.iter().map(|x| x.processed).collect();
    let mean = processed.iter().sum::<u64>() as f64 / processed.len() as f64;
    let spread = processed.iter().map(|p| (*p as f64 - mean).abs() / mean).fold(0.0, f64::max);
    let before: Vec<u64> = skewed.execs.iter().map(|x| x.processed).collect();

    // Queries in flight across a migration still return oracle results.
    let social = preset_mix_during_migration(&pg, &reg);

    let pass = owned.iter().all(|n| *n == 8) && spread <= 0.25 && scans_ok && social.is_ok();
    let detail = format!(
        "{} moves, owned {owned:?}, window before {before:?}, after {processed:?} (max deviation {:.1}%), in-flight check {}",
        moves.len(),
        spread * 100.0,
        match &social {
            Ok(n) => format!("{n} queries ok"),
            Err(e) => e.clone(),
        }
    );
    line(7, pass, "rebalancing evens skewed tablet load", &detail);
    assert!(pass, "{detail}");
}

/// Starts every preset, migrates tablets while they run, starts them again
/// on the new routing, and checks all results.
fn preset_mix_during_migration(pg: &Arc<PartitionedGraph>, reg: &PolicyRegistry) -> Result<usize, String> {
    let owners: Vec<ExecId> = (0..TABLETS as u32).map(|t| if t < 48 { t / 12 } else { 4 + (t - 48) / 4 }).collect();
    let handle = RoutingHandle::new(RoutingTable::from_owners(owners, EXECS as usize));
    let mut e = Engine::new(EngineConfig { executors: EXECS, quota: 16, ..EngineConfig::default() });
    let mut submitted = Vec::new();
    let mut submit_all = |e: &mut Engine, h: &RoutingHandle| {
        for (i, name) in PRESETS.iter().enumerate() {
            let q = preset(name).unwrap();
            let p = params(i as i64 * 37, 50);
            let plan = prepare(&q, &p, pg, h.snapshot(), &CompileOptions::default(), reg).unwrap();
            submitted.push((e.submit(plan), q.bind(&p).unwrap()));
        }
    };
    submit_all(&mut e, &handle);
    for _ in 0..3 {
        e.step();
    }
    let lv = LoadVector::from_tablets(&handle.snapshot(), &[1.0; TABLETS]);
    let moves = plan_migration(&lv, 1.2);
    if moves.is_empty() {
        return Err("no migration planned".into());
    }
    for m in moves {
        apply_migration(&handle, m);
        e.step();
    }
    submit_all(&mut e, &handle);
    e.run_all();
    for (q, bound) in &submitted {
        let o = e.outcome(*q);
        if o.status != Status::Completed {
            return Err(format!("q{q} {}: {:?}", bound.name, o.faults));
        }
        check_results(bound, pg.graph(), &o.results).map_err(|err| format!("q{q} {}: {err}", bound.name))?;
    }
    Ok(submitted.len())
}

// ---------------------------------------------------------------------------
// 8: model validation

fn scope(id: ScopeId, kind: ScopeKind, ingress: u32, egress: u32, internal: &[u32]) -> ScopeDecl {
    ScopeDecl {
        id,
        kind,
        ingress,
        egress,
        internal: internal.iter().copied().collect(),
        depth: 1,
        max_si: None,
        inter_si_policy: "fifo".into(),
        intra_si_policy: "fifo".into(),
    }
}

fn empty() -> LogicalDataflow {
    LogicalDataflow { vertices: vec![], edges: vec![], scopes: vec![], root_intra_policy: "fifo".into() }
}

/// source -> ingress -> a -> b -> egress -> sink, b -> ingress backward.
fn looped() -> LogicalDataflow {
    let mut d = empty();
    let src = d.add_vertex("source", OperatorSpec::Source);
    let ing = d.add_vertex("ingress", OperatorSpec::Ingress);
    let a = d.add_vertex("a", OperatorSpec::Identity);
    let b = d.add_vertex("b", OperatorSpec::Identity);
    let eg = d.add_vertex("egress", OperatorSpec::Egress);
    let sink = d.add_vertex("sink", OperatorSpec::Sink { limit: None });
    d.add_edge(src, ing, 0, false, PartitionFn::ForwardLocal);
    d.add_edge(ing, a, 0, false, PartitionFn::ForwardLocal);
    d.add_edge(a, b, 0, false, PartitionFn::ForwardLocal);
    d.add_edge(b, eg, 0, false, PartitionFn::ByTag);
    d.add_edge(b, ing, 1, true, PartitionFn::ForwardLocal);
    d.add_edge(eg, sink, 0, false, PartitionFn::Single);
    d.scopes.push(scope(0, ScopeKind::Loop, ing, eg, &[a, b]));
    d
}

#[test]
fn criterion_8_model_validation() {
    let mut accepted = 0;
    let mut pass = true;
    for name in PRESETS {
        for scopes in [true, false] {
            let df = compile(&preset(name).unwrap(), scopes).unwrap();
            pass &= validate_dataflow(&df).is_ok();
            accepted += 1;
        }
    }
    pass &= validate_dataflow(&looped()).is_ok();

    let mut cycle = empty();
    let a = cycle.add_vertex("a", OperatorSpec::Identity);
    let b = cycle.add_vertex("b", OperatorSpec::Identity);
    cycle.add_edge(a, b, 0, false, PartitionFn::ForwardLocal);
    cycle.add_edge(b, a, 0, false, PartitionFn::ForwardLocal);

    let mut overlap = empty();
    let ids: Vec<u32> = ["i0", "i1", "x", "y", "z", "e0", "e1"]
        .iter()
        .map(|n| {
            let op = if n.starts_with('i') { OperatorSpec::Ingress } else if n.starts_with('e') { OperatorSpec::Egress } else { OperatorSpec::Identity };
            overlap.add_vertex(*n, op)
        })
        .collect();
    overlap.scopes.push(scope(0, ScopeKind::Branch, ids[0], ids[5], &[ids[2], ids[3]]));
    overlap.scopes.push(scope(1, ScopeKind::Branch, ids[1], ids[6], &[ids[3], ids[4]]));

    let mut backward = looped();
    backward.edges[4].dst = 2;

    let mut bypass = looped();
    let extra = bypass.add_edge(3, 5, 0, false, PartitionFn::Single);

    let fixtures: [(&str, LogicalDataflow, Box<dyn Fn(&Violation) -> bool>); 4] = [
        ("cycle outside scope", cycle, Box::new(|v| matches!(v, Violation::CycleOutsideScope { .. }))),
        ("overlapping scopes", overlap, Box::new(|v| matches!(v, Violation::NotWellNested { .. }))),
        ("backward edge to non-ingress", backward, Box::new(|v| matches!(v, Violation::BackwardTargetNotIngress { edge: 4 }))),
        ("edge bypassing egress", bypass, Box::new(move |v| matches!(v, Violation::BypassesEgress { edge, .. } if *edge == extra))),
    ];
    let mut rejected = Vec::new();
    for (name, df, expect) in &fixtures {
        let r = validate_dataflow(df);
        if r.violations.iter().any(|v| expect(v)) {
            rejected.push(*name);
        } else {
            pass = false;
        }
    }
    let detail = format!("{accepted} compiled presets accepted, rejected {}/4: {rejected:?}", rejected.len());
    line(8, pass, "structural validation", &detail);
    assert!(pass, "{detail}");
}
