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

//! Benchmark driver: keeps W queries in flight, measures them and reports.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::balance::{BalanceConfig, Balancer, LoadVector, Move};
use crate::dataflow::PolicyRegistry;
use crate::graph::{
    generate, load_csv, partition, ExecId, GenSpec, GraphError, PartitionedGraph, PropertyGraph, RoutingHandle,
    RoutingTable,
};
use crate::query::{prepare, preset, CompileOptions, Params, PhysicalPlan, QueryError, QueryIR};
use crate::runtime::{Engine, EngineConfig, QueryId, QueryOutcome, Status, ThreadedEngine};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error("config: {0}")]
    Config(String),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Text,
    Json,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Schema file of a CSV graph; used instead of `gen` when set.
    pub schema: Option<PathBuf>,
    pub gen: Option<GenSpec>,
    pub executors: u32,
    pub tablets: usize,
    /// Initial tablet owners; round robin when absent.
    pub owners: Option<Vec<ExecId>>,
    pub seed: u64,
    pub deterministic: bool,
    /// Messages (deterministic) or microseconds per quantum.
    pub quota: u64,
    /// Preset name or query file.
    pub query: String,
    /// One run row per parameter set; the query defaults when empty.
    pub params: Vec<Params>,
    /// Queries kept in flight.
    pub concurrency: usize,
    pub reps: usize,
    pub warmup: usize,
    /// Ticks (deterministic) or milliseconds.
    pub timeout: u64,
    pub compile: CompileOptions,
    pub format: Format,
    /// Rebalance every window when the imbalance exceeds this ratio.
    pub auto_balance: Option<f64>,
    pub balance_window: u64,
}

impl Default for RunConfig {
    fn default() -> RunConfig {
        RunConfig {
            schema: None,
            gen: None,
            executors: 4,
            tablets: 32,
            owners: None,
            seed: 0,
            deterministic: true,
            quota: 64,
            query: "cq1".into(),
            params: Vec::new(),
            concurrency: 1,
            reps: 10,
            warmup: 10,
            timeout: 200_000_000,
            compile: CompileOptions::default(),
            format: Format::Text,
            auto_balance: None,
            balance_window: crate::balance::DEFAULT_WINDOW,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig, BenchError> {
        toml::from_str(text).map_err(|e| BenchError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: &str| Err(BenchError::Config(m.to_string()));
        if self.concurrency == 0 {
            return bad("concurrency must be at least 1");
        }
        if self.timeout == 0 {
            return bad("timeout must be positive");
        }
        if self.executors == 0 || self.tablets == 0 {
            return bad("executors and tablets must be positive");
        }
        if let Some(o) = &self.owners {
            if o.len() != self.tablets || o.iter().any(|e| *e >= self.executors) {
                return bad("owners must name an executor for every tablet");
            }
        }
        if self.schema.is_none() && self.gen.is_none() {
            return bad("no graph: give a schema file or a generator spec");
        }
        Ok(())
    }

    pub fn engine_config(&self) -> EngineConfig {
        EngineConfig {
            executors: self.executors,
            quota: self.quota,
            seed: self.seed,
            timeout_ticks: self.timeout,
            timeout_ms: self.timeout,
            ..EngineConfig::default()
        }
    }

    pub fn load_graph(&self) -> Result<PropertyGraph, BenchError> {
        match (&self.schema, &self.gen) {
            (Some(p), _) => Ok(load_csv(p)?.0),
            (None, Some(g)) => Ok(generate(g, self.seed)),
            (None, None) => Err(BenchError::Config("no graph".into())),
        }
    }

    pub fn load_query(&self) -> Result<QueryIR, BenchError> {
        load_query(&self.query)
    }

    pub fn routing(&self) -> RoutingTable {
        match &self.owners {
            Some(o) => RoutingTable::from_owners(o.clone(), self.executors as usize),
            None => RoutingTable::round_robin(self.tablets, self.executors as usize),
        }
    }
}

/// A preset name, or a path to a query file.
pub fn load_query(spec: &str) -> Result<QueryIR, BenchError> {
    let q = match preset(spec) {
        Ok(q) => q,
        Err(QueryError::UnknownPreset(_)) if std::path::Path::new(spec).exists() => QueryIR::load(spec.as_ref())?,
        Err(e) => return Err(e.into()),
    };
    q.validate()?;
    Ok(q)
}

/// Statistics of one (query, parameter set) row.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunRow {
    pub query: String,
    pub params: Params,
    pub samples: usize,
    pub timeouts: usize,
    pub faults: usize,
    pub min: u64,
    pub avg: f64,
    pub max: u64,
    pub results: usize,
    pub messages: u64,
    pub ops_created: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchReport {
    /// "ticks" or "us".
    pub unit: String,
    pub concurrency: usize,
    pub rows: Vec<RunRow>,
    pub completed: usize,
    pub timeouts: usize,
    pub faults: Vec<String>,
    /// Measured phase length, in `unit`.
    pub elapsed: u64,
    /// Completed queries per tick, or per second.
    pub throughput: f64,
    pub messages: u64,
    pub ops_created: u64,
    pub windows: Vec<LoadVector>,
    pub moves: Vec<Move>,
}

impl BenchReport {
    pub fn ok(&self) -> bool {
        self.faults.is_empty()
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => serde_json::to_string_pretty(self).expect("report serializes") + "\n",
            Format::Text => self.text(),
        }
    }

    fn text(&self) -> String {
        let mut s = String::new();
        let u = &self.unit;
        for r in &self.rows {
            let params: Vec<String> = r.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
            let _ = writeln!(
                s,
                "query={} params={} samples={} min={}{u} avg={:.1}{u} max={}{u} results={} messages={} ops_created={} timeouts={} faults={}",
                r.query,
                params.join(","),
                r.samples,
                r.min,
                r.avg,
                r.max,
                r.results,
                r.messages,
                r.ops_created,
                r.timeouts,
                r.faults
            );
        }
        let per = if u == "us" { "s" } else { "tick" };
        let _ = writeln!(
            s,
            "total completed={} timeouts={} faults={} elapsed={}{u} throughput={:.6e}/{per} messages={} ops_created={} W={}",
            self.completed,
            self.timeouts,
            self.faults.len(),
            self.elapsed,
            self.throughput,
            self.messages,
            self.ops_created,
            self.concurrency
        );
        for w in &self.windows {
            let loads: Vec<String> = w.execs.iter().map(|e| format!("{:.0}", e.load)).collect();
            let _ = writeln!(s, "window {} version={} loads=[{}]", w.window, w.routing_version, loads.join(","));
        }
        for m in &self.moves {
            let _ = writeln!(s, "move tablet={} from={} to={}", m.tablet, m.from, m.to);
        }
        for f in &self.faults {
            let _ = writeln!(s, "FAULT {f}");
        }
        s
    }
}

#[derive(Clone, Copy)]
struct Job {
    row: usize,
    measured: bool,
}

#[derive(Default)]
struct Acc {
    lat: Vec<u64>,
    timeouts: usize,
    faults: usize,
    results: usize,
    messages: u64,
    ops: u64,
}

/// Everything a run needs besides the engine.
pub struct Workload {
    pub cfg: RunConfig,
    pub query: QueryIR,
    pub params: Vec<Params>,
    pub graph: Arc<PartitionedGraph>,
    pub routing: Arc<RoutingHandle>,
    pub registry: PolicyRegistry,
    plans: BTreeMap<(usize, u64), Arc<PhysicalPlan>>,
}

impl Workload {
    pub fn new(cfg: RunConfig) -> Result<Workload, BenchError> {
        cfg.validate()?;
        let query = cfg.load_query()?;
        let graph = Arc::new(partition(Arc::new(cfg.load_graph()?), cfg.tablets, cfg.seed));
        let routing = Arc::new(RoutingHandle::new(cfg.routing()));
        let params = if cfg.params.is_empty() { vec![Params::new()] } else { cfg.params.clone() };
        Ok(Workload { cfg, query, params, graph, routing, registry: PolicyRegistry::with_builtins(), plans: BTreeMap::new() })
    }

    /// Plan for a parameter row against the current routing snapshot.
    pub fn plan(&mut self, row: usize) -> Result<Arc<PhysicalPlan>, BenchError> {
        let snap = self.routing.snapshot();
        if let Some(p) = self.plans.get(&(row, snap.version)) {
            return Ok(p.clone());
        }
        let p = prepare(&self.query, &self.params[row], &self.graph, snap.clone(), &self.cfg.compile, &self.registry)?;
        self.plans.retain(|(_, v), _| *v == snap.version);
        self.plans.insert((row, snap.version), p.clone());
        Ok(p)
    }

    fn jobs(&self) -> VecDeque<Job> {
        let n = self.params.len();
        let warm = (0..self.cfg.warmup * n).map(|i| Job { row: i % n, measured: false });
        let meas = (0..self.cfg.reps * n).map(|i| Job { row: i % n, measured: true });
        warm.chain(meas).collect()
    }

    fn report(&self, accs: Vec<Acc>, faults: Vec<String>, elapsed: u64, unit: &str) -> BenchReport {
        let mut rows = Vec::new();
        for (i, a) in accs.into_iter().enumerate() {
            let samples = a.lat.len();
            let mut params = self.query.params.clone();
            params.extend(self.params[i].clone());
            rows.push(RunRow {
                query: self.query.name.clone(),
                params,
                samples,
                timeouts: a.timeouts,
                faults: a.faults,
                min: a.lat.iter().copied().min().unwrap_or(0),
                avg: if samples == 0 { 0.0 } else { a.lat.iter().sum::<u64>() as f64 / samples as f64 },
                max: a.lat.iter().copied().max().unwrap_or(0),
                results: a.results,
                messages: a.messages,
                ops_created: a.ops,
            });
        }
        let completed: usize = rows.iter().map(|r| r.samples).sum();
        let per_unit = if unit == "us" { elapsed as f64 / 1e6 } else { elapsed as f64 };
        BenchReport {
            unit: unit.into(),
            concurrency: self.cfg.concurrency,
            completed,
            timeouts: rows.iter().map(|r| r.timeouts).sum(),
            faults,
            elapsed,
            throughput: if per_unit > 0.0 { completed as f64 / per_unit } else { 0.0 },
            messages: rows.iter().map(|r| r.messages).sum(),
            ops_created: rows.iter().map(|r| r.ops_created).sum(),
            rows,
            windows: Vec::new(),
            moves: Vec::new(),
        }
    }
}

fn record(acc: &mut Acc, o: &QueryOutcome, faults: &mut Vec<String>) {
    match o.status {
        Status::Completed => acc.lat.push(o.latency().unwrap_or(0)),
        Status::Timeout => acc.timeouts += 1,
        Status::Fault => {
            acc.faults += 1;
            faults.extend(o.faults.iter().cloned());
        }
    }
    acc.results = o.results.len();
    acc.messages += o.stats.processed();
    acc.ops += o.stats.ops_created;
}

/// Runs the warmup and measured phases with `concurrency` queries in flight.
pub fn run_bench(cfg: RunConfig) -> Result<BenchReport, BenchError> {
    let mut w = Workload::new(cfg)?;
    if w.cfg.deterministic {
        run_deterministic(&mut w)
    } else {
        run_threaded(&mut w)
    }
}

fn balancer(cfg: &RunConfig) -> Option<Balancer> {
    cfg.auto_balance.map(|t| Balancer::new(BalanceConfig { window: cfg.balance_window, threshold: t, ..BalanceConfig::default() }))
}

pub fn run_deterministic(w: &mut Workload) -> Result<BenchReport, BenchError> {
    let mut engine = Engine::new(w.cfg.engine_config());
    let mut jobs = w.jobs();
    let mut accs: Vec<Acc> = (0..w.params.len()).map(|_| Acc::default()).collect();
    let mut faults = Vec::new();
    let mut inflight: Vec<(QueryId, Job)> = Vec::new();
    let mut bal = balancer(&w.cfg);
    let (mut windows, mut moves) = (Vec::new(), Vec::new());
    let window = w.cfg.balance_window.max(1);
    let mut next_window = window;
    let (mut start, mut end) = (None, 0);
    loop {
        while inflight.len() < w.cfg.concurrency {
            let Some(job) = jobs.pop_front() else { break };
            let plan = w.plan(job.row)?;
            if job.measured && start.is_none() {
                start = Some(engine.now());
            }
            inflight.push((engine.submit(plan), job));
        }
        if inflight.is_empty() {
            break;
        }
        let balancing = bal.is_some();
        engine.run_until(|e| {
            inflight.iter().any(|(q, _)| e.is_finished(*q)) || (balancing && e.round() >= next_window)
        });
        if let Some(b) = &mut bal {
            if engine.round() >= next_window {
                let (lv, plan) = b.on_window(&w.routing, &engine.loads());
                windows.push(lv);
                moves.extend(plan);
                next_window += window;
            }
        }
        let mut i = 0;
        while i < inflight.len() {
            let (q, job) = inflight[i];
            if engine.is_finished(q) {
                inflight.swap_remove(i);
                let o = engine.forget(q).expect("submitted query");
                if job.measured {
                    end = end.max(o.completion_tick.unwrap_or(0));
                    record(&mut accs[job.row], &o, &mut faults);
                } else if o.status == Status::Fault {
                    faults.extend(o.faults);
                }
            } else {
                i += 1;
            }
        }
    }
    let elapsed = end.saturating_sub(start.unwrap_or(0));
    let mut r = w.report(accs, faults, elapsed, "ticks");
    r.windows = windows;
    r.moves = moves;
    Ok(r)
}

pub fn run_threaded(w: &mut Workload) -> Result<BenchReport, BenchError> {
    let mut engine = ThreadedEngine::new(w.cfg.engine_config());
    let mut jobs = w.jobs();
    let mut accs: Vec<Acc> = (0..w.params.len()).map(|_| Acc::default()).collect();
    let mut faults = Vec::new();
    let mut inflight = Vec::new();
    let mut bal = balancer(&w.cfg);
    let (mut windows, mut moves) = (Vec::new(), Vec::new());
    let window = Duration::from_micros(w.cfg.balance_window.max(1) * w.cfg.quota.max(1));
    let mut next_window = Instant::now() + window;
    let (mut start, mut end) = (None, 0);
    loop {
        while inflight.len() < w.cfg.concurrency {
            let Some(job) = jobs.pop_front() else { break };
            let plan = w.plan(job.row)?;
            if job.measured && start.is_none() {
                start = Some(engine.now());
            }
            inflight.push((engine.submit(plan), job));
        }
        if inflight.is_empty() {
            break;
        }
        std::thread::sleep(Duration::from_micros(50));
        if let Some(b) = &mut bal {
            if Instant::now() >= next_window {
                let (lv, plan) = b.on_window(&w.routing, &engine.loads());
                windows.push(lv);
                moves.extend(plan);
                next_window += window;
            }
        }
        let mut i = 0;
        while i < inflight.len() {
            // `wait` enforces the timeout; a query that is still running
            // costs one bounded wait per poll only once its deadline passed.
            let (s, job) = &inflight[i];
            let overdue = engine.now().saturating_sub(s.submitted()) > w.cfg.timeout * 1000;
            if s.is_finished() || overdue {
                let o = engine.wait(s);
                let job = *job;
                inflight.swap_remove(i);
                if job.measured {
                    end = end.max(o.completion_tick.unwrap_or(0));
                    record(&mut accs[job.row], &o, &mut faults);
                } else if o.status == Status::Fault {
                    faults.extend(o.faults);
                }
            } else {
                i += 1;
            }
        }
    }
    for ev in engine.shutdown() {
        if let crate::runtime::EventKind::Fault(m) = ev.kind {
            if !faults.contains(&m) {
                faults.push(m);
            }
        }
    }
    let elapsed = end.saturating_sub(start.unwrap_or(0));
    let mut r = w.report(accs, faults, elapsed, "us");
    r.windows = windows;
    r.moves = moves;
    Ok(r)
}

/// Result of an immediate rebalance.
#[derive(Clone, Debug, Serialize)]
pub struct RebalanceReport {
    pub before: LoadVector,
    pub moves: Vec<Move>,
    /// Load of a second, identical workload run after the moves.
    pub after: LoadVector,
}

impl RebalanceReport {
    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => serde_json::to_string_pretty(self).expect("report serializes") + "\n",
            Format::Text => {
                let mut s = String::from("[before]\n");
                s += &self.before.report();
                for m in &self.moves {
                    let _ = writeln!(s, "move tablet={} from={} to={}", m.tablet, m.from, m.to);
                }
                s += "[after]\n";
                s += &self.after.report();
                s
            }
        }
    }
}

/// Measures one pass of the workload on a deterministic engine, migrates
/// tablets until the loads are within `threshold`, and measures again.
pub fn rebalance(cfg: RunConfig, threshold: f64) -> Result<RebalanceReport, BenchError> {
    let mut w = Workload::new(RunConfig { deterministic: true, warmup: 0, ..cfg })?;
    let measure = |w: &mut Workload| -> Result<LoadVector, BenchError> {
        let mut engine = Engine::new(w.cfg.engine_config());
        let before = engine.loads();
        for row in 0..w.params.len() {
            for _ in 0..w.cfg.reps.max(1) {
                let p = w.plan(row)?;
                engine.submit(p);
            }
        }
        engine.run_all();
        Ok(LoadVector::between(&w.routing.snapshot(), &before, &engine.loads(), 0))
    };
    let before = measure(&mut w)?;
    let moves = crate::balance::plan_migration(&before, threshold);
    for m in &moves {
        crate::balance::apply_migration(&w.routing, *m);
    }
    let mut after = measure(&mut w)?;
    after.window = 1;
    Ok(RebalanceReport { before, moves, after })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> RunConfig {
        RunConfig {
            gen: Some(GenSpec::Social { persons: 40, avg_knows: 3, companies: 3, posts_per_person: 2, tags: 8 }),
            executors: 2,
            tablets: 8,
            query: "cq3".into(),
            reps: 3,
            warmup: 1,
            concurrency: 2,
            ..RunConfig::default()
        }
    }

    #[test]
    fn deterministic_report_is_reproducible() {
        let a = run_bench(small()).unwrap();
        let b = run_bench(small()).unwrap();
        assert!(a.ok(), "{:?}", a.faults);
        assert_eq!(a.completed, 3);
        assert_eq!(a.render(Format::Text), b.render(Format::Text));
        assert_eq!(a.throughput, a.completed as f64 / a.elapsed as f64);
    }

    #[test]
    fn config_checks() {
        assert!(RunConfig { concurrency: 0, ..small() }.validate().is_err());
        assert!(RunConfig { timeout: 0, ..small() }.validate().is_err());
        assert!(RunConfig { gen: None, ..small() }.validate().is_err());
        let c = RunConfig::from_toml("query = \"cq1\"\nconcurrency = 3\n[gen]\nshape = \"cycle\"\nn = 5\n").unwrap();
        assert_eq!((c.concurrency, c.gen), (3, Some(GenSpec::Cycle { n: 5 })));
    }

    #[test]
    fn rows_per_parameter_set() {
        let mut c = small();
        c.params = vec![Params::from([("person_id".into(), 1)]), Params::from([("person_id".into(), 2)])];
        let r = run_bench(c).unwrap();
        assert_eq!(r.rows.len(), 2);
        assert!(r.rows.iter().all(|row| row.samples == 3));
        assert_eq!(r.rows[1].params["person_id"], 2);
    }

    #[test]
    fn threaded_mode_completes() {
        let r = run_bench(RunConfig { deterministic: false, quota: 200, timeout: 30_000, ..small() }).unwrap();
        assert!(r.ok(), "{:?}", r.faults);
        assert_eq!(r.completed + r.timeouts, 3);
    }
}
