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

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use scopeflow::bench::{load_query, rebalance, run_bench, BenchError, Format, RunConfig};
use scopeflow::dataflow::validate_dataflow;
use scopeflow::graph::{generate, load_csv, write_csv, GenSpec};
use scopeflow::query::{compile, Params};

#[derive(Parser)]
#[command(name = "scopeflow", version, about = "Scoped dataflow engine for concurrent graph traversals")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Load a CSV graph and print its vertex and edge counts.
    Load { schema: PathBuf },
    /// Write a seeded synthetic graph as CSV.
    Gen {
        /// Shape and sizes, e.g. "cycle n=10" or "heavy_tweeter candidates=100 items=1000 match_pos=1".
        spec: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a query once and print its results.
    Run(RunArgs),
    /// Run warmup and measured repetitions and print a report.
    Bench(RunArgs),
    /// Measure the workload, migrate tablets, and measure again.
    Rebalance {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 1.2)]
        threshold: f64,
    },
    /// Compile a query and check the dataflow structure.
    Validate {
        query: String,
        #[arg(long, value_enum, default_value_t = Scopes::Both)]
        scopes: Scopes,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Scopes {
    On,
    Off,
    Both,
}

#[derive(Args, Clone, Default)]
struct RunArgs {
    /// TOML file with run configuration defaults.
    #[arg(long, env = "SCOPEFLOW_CONFIG")]
    config: Option<PathBuf>,
    #[arg(long, env = "SCOPEFLOW_SCHEMA")]
    schema: Option<PathBuf>,
    /// Generator spec used when no schema is given.
    #[arg(long, env = "SCOPEFLOW_GEN")]
    gen: Option<String>,
    #[arg(long, env = "SCOPEFLOW_EXECUTORS")]
    executors: Option<u32>,
    #[arg(long, env = "SCOPEFLOW_TABLETS")]
    tablets: Option<usize>,
    /// Comma-separated initial owner of every tablet.
    #[arg(long)]
    owners: Option<String>,
    #[arg(long, env = "SCOPEFLOW_SEED")]
    seed: Option<u64>,
    /// Use one thread per executor and wall-clock quanta.
    #[arg(long)]
    threaded: bool,
    #[arg(long, env = "SCOPEFLOW_QUOTA")]
    quota: Option<u64>,
    /// Preset name or query file.
    #[arg(long, short)]
    query: Option<String>,
    /// One parameter set, "k=v,k=v"; repeat for more rows.
    #[arg(long = "param", short)]
    params: Vec<String>,
    #[arg(long, short = 'W', env = "SCOPEFLOW_CONCURRENCY")]
    concurrency: Option<usize>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    warmup: Option<usize>,
    #[arg(long, env = "SCOPEFLOW_TIMEOUT")]
    timeout: Option<u64>,
    #[arg(long, value_enum)]
    scopes: Option<OnOff>,
    #[arg(long)]
    inter: Option<String>,
    #[arg(long)]
    intra: Option<String>,
    #[arg(long)]
    root: Option<String>,
    #[arg(long)]
    max_si: Option<u32>,
    #[arg(long)]
    pure_parallelism: Option<u32>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    #[arg(long)]
    auto_balance: Option<f64>,
    #[arg(long)]
    balance_window: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum OnOff {
    On,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Text,
    Json,
}

fn err(m: impl Into<String>) -> BenchError {
    BenchError::Config(m.into())
}

fn parse_gen(spec: &str) -> Result<GenSpec, BenchError> {
    let mut parts = spec.split_whitespace();
    let shape = parts.next().ok_or_else(|| err("empty generator spec"))?;
    let mut text = format!("shape = \"{shape}\"\n");
    for kv in parts {
        let (k, v) = kv.split_once('=').ok_or_else(|| err(format!("expected key=value, got `{kv}`")))?;
        text += &format!("{k} = {v}\n");
    }
    toml::from_str(&text).map_err(|e| err(format!("generator spec `{spec}`: {e}")))
}

fn parse_params(s: &str) -> Result<Params, BenchError> {
    let mut p = Params::new();
    for kv in s.split(',').filter(|kv| !kv.is_empty()) {
        let (k, v) = kv.split_once('=').ok_or_else(|| err(format!("expected name=value, got `{kv}`")))?;
        let v = v.trim().parse().map_err(|_| err(format!("parameter `{k}` is not an integer")))?;
        p.insert(k.trim().trim_start_matches('$').to_string(), v);
    }
    Ok(p)
}

impl RunArgs {
    fn config(&self) -> Result<RunConfig, BenchError> {
        let mut c = match &self.config {
            Some(p) => RunConfig::from_toml(&std::fs::read_to_string(p).map_err(|e| err(format!("{}: {e}", p.display())))?)?,
            None => RunConfig::default(),
        };
        if let Some(s) = &self.schema {
            c.schema = Some(s.clone());
        }
        if let Some(g) = &self.gen {
            c.gen = Some(parse_gen(g)?);
        }
        if c.schema.is_none() && c.gen.is_none() {
            c.gen = Some(GenSpec::Social { persons: 200, avg_knows: 5, companies: 8, posts_per_person: 3, tags: 20 });
        }
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f.clone() { c.$f = v; })* };
        }
        set!(executors, tablets, seed, quota, query, concurrency, reps, warmup, timeout);
        if let Some(o) = &self.owners {
            let owners = o.split(',').map(|x| x.trim().parse().map_err(|_| err(format!("bad owner `{x}`"))));
            c.owners = Some(owners.collect::<Result<_, _>>()?);
        }
        if self.threaded {
            c.deterministic = false;
        }
        if !self.params.is_empty() {
            c.params = self.params.iter().map(|s| parse_params(s)).collect::<Result<_, _>>()?;
        }
        if let Some(s) = self.scopes {
            c.compile.scopes = matches!(s, OnOff::On);
        }
        for (dst, src) in [(&mut c.compile.inter, &self.inter), (&mut c.compile.intra, &self.intra), (&mut c.compile.root, &self.root)] {
            if src.is_some() {
                *dst = src.clone();
            }
        }
        if self.max_si.is_some() {
            c.compile.max_si = self.max_si;
        }
        if let Some(p) = self.pure_parallelism {
            c.compile.pure_parallelism = p;
        }
        if let Some(f) = self.format {
            c.format = match f {
                FormatArg::Text => Format::Text,
                FormatArg::Json => Format::Json,
            };
        }
        if self.auto_balance.is_some() {
            c.auto_balance = self.auto_balance;
        }
        if let Some(w) = self.balance_window {
            c.balance_window = w;
        }
        Ok(c)
    }
}

fn main() -> ExitCode {
    match real_main(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn real_main(cli: Cli) -> Result<bool, BenchError> {
    match cli.cmd {
        Cmd::Load { schema } => {
            let (g, summary) = load_csv(&schema)?;
            for (t, n) in summary.vertices {
                println!("vertices {t} {n}");
            }
            for (l, n) in summary.edges {
                println!("edges {l} {n}");
            }
            println!("total vertices={} edges={}", g.num_vertices(), g.num_edges());
            Ok(true)
        }
        Cmd::Gen { spec, seed, out } => {
            let g = generate(&parse_gen(&spec)?, seed);
            let path = write_csv(&g, &out)?;
            println!("wrote {} ({} vertices, {} edges)", path.display(), g.num_vertices(), g.num_edges());
            Ok(true)
        }
        Cmd::Run(args) => {
            let mut c = args.config()?;
            c.reps = args.reps.unwrap_or(1);
            c.warmup = args.warmup.unwrap_or(0);
            c.concurrency = args.concurrency.unwrap_or(1);
            let format = c.format;
            let mut w = scopeflow::bench::Workload::new(c)?;
            let plan = w.plan(0)?;
            let graph = w.graph.clone();
            let r = if w.cfg.deterministic {
                let mut e = scopeflow::runtime::Engine::new(w.cfg.engine_config());
                scopeflow::query::execute(&mut e, plan)
            } else {
                let mut e = scopeflow::runtime::ThreadedEngine::new(w.cfg.engine_config());
                let s = e.submit(plan);
                let o = e.wait(&s);
                e.shutdown();
                o
            };
            let mut lines: Vec<String> = r
                .results
                .iter()
                .map(|v| match v {
                    scopeflow::runtime::Value::Vertex(x) => {
                        format!("{}:{}", graph.graph().vertex_type_name(*x), graph.graph().vertex_ref(*x).id)
                    }
                    scopeflow::runtime::Value::Count(n) => format!("count:{n}"),
                })
                .collect();
            lines.sort();
            match format {
                Format::Json => println!("{}", serde_json::json!({ "status": r.status, "results": lines, "latency": r.latency(), "stats": r.stats })),
                Format::Text => {
                    for l in &lines {
                        println!("{l}");
                    }
                    println!(
                        "status={:?} results={} latency={} messages={} ops_created={}",
                        r.status,
                        lines.len(),
                        r.latency().unwrap_or(0),
                        r.stats.processed(),
                        r.stats.ops_created
                    );
                    for f in &r.faults {
                        println!("FAULT {f}");
                    }
                }
            }
            Ok(r.faults.is_empty())
        }
        Cmd::Bench(args) => {
            let c = args.config()?;
            let format = c.format;
            let r = run_bench(c)?;
            print!("{}", r.render(format));
            Ok(r.ok())
        }
        Cmd::Rebalance { run, threshold } => {
            let c = run.config()?;
            let format = c.format;
            let r = rebalance(c, threshold)?;
            print!("{}", r.render(format));
            Ok(true)
        }
        Cmd::Validate { query, scopes } => {
            let q = load_query(&query)?;
            let modes: &[bool] = match scopes {
                Scopes::On => &[true],
                Scopes::Off => &[false],
                Scopes::Both => &[true, false],
            };
            let mut ok = true;
            for &s in modes {
                let df = compile(&q, s)?;
                let rep = validate_dataflow(&df);
                println!("{} scopes={} vertices={} {}", q.name, if s { "on" } else { "off" }, df.vertices.len(), rep);
                ok &= rep.is_ok();
            }
            Ok(ok)
        }
    }
}
