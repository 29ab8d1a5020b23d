// Copyright 2026 The Skylite Authors
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


//! Command-line entry points: data generation, query execution with cost
//! and latency reporting, the reference executor, the elasticity sweep and
//! result-cache maintenance.

mod state;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;
use skylite::bench::{datagen, elasticity_sweep, latency_ratio, run_oracle, DataGenSpec};
use skylite::exec::coordinator::{read_result, Engine, EngineConfig, RunReport};
use skylite::exec::registry;
use skylite::sim::{ConfigFile, FaultPlan, SimConfig, Simulator};
use skylite::sql::tpch;
use skylite::storage::{Catalog, RecordBatch, ScalarValue};

use state::StateDir;

#[derive(Parser)]
#[command(name = "skylite", version, about = "Serverless-style SQL on a simulated cloud")]
struct Cli {
    /// Price/latency configuration file.
    #[arg(long, global = true, env = "SKYLITE_CONFIG")]
    config: Option<PathBuf>,
    /// Directory persisting simulated storage between invocations.
    #[arg(long, global = true)]
    state: Option<PathBuf>,
    /// Machine-readable output.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate lineitem and orders at a scale factor.
    Datagen(DataArgs),
    /// Run a query and report latency and cost.
    Run(RunArgs),
    /// Run a query on the single-threaded reference executor.
    Oracle(QueryArgs),
    /// Cold Q1 and Q6 runs over several scale factors.
    Sweep(SweepArgs),
    /// Inspect or clear the result cache.
    Cache {
        #[command(subcommand)]
        action: CacheAction,
    },
}

#[derive(Subcommand)]
enum CacheAction {
    List,
    Clear,
}

#[derive(Args, Clone)]
struct DataArgs {
    #[arg(long, default_value_t = 0.01)]
    sf: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args)]
struct QueryArgs {
    /// SQL text; alternatively use --tpch.
    sql: Option<String>,
    /// TPC-H query number (1, 6 or 12).
    #[arg(long)]
    tpch: Option<u32>,
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    query: QueryArgs,
    /// Repetitions; the median latency is reported.
    #[arg(long, default_value_t = 1)]
    repeat: usize,
    /// Do not consult the result cache.
    #[arg(long)]
    no_cache: bool,
    /// File with fault.* settings.
    #[arg(long)]
    fault_plan: Option<PathBuf>,
    /// Simultaneous coordinators per repetition.
    #[arg(long, default_value_t = 1)]
    concurrency: usize,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_delimiter = ',', default_value = "0.001,0.01,0.1,1")]
    sfs: Vec<f64>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    fault_plan: Option<PathBuf>,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let file = match &cli.config {
        Some(p) => ConfigFile::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => ConfigFile {
            sim: SimConfig::default(),
            faults: None,
        },
    };
    let faults = match &cli.command {
        Command::Run(RunArgs { fault_plan: Some(p), .. }) | Command::Sweep(SweepArgs { fault_plan: Some(p), .. }) => {
            Some(load_fault_plan(p)?)
        }
        _ => file.faults.clone(),
    };
    let sim = Simulator::with_faults(file.sim.clone(), faults);
    let state = cli.state.as_deref().map(StateDir::new);
    if let Some(s) = &state {
        s.load(&sim)?;
    }
    match &cli.command {
        Command::Datagen(d) => cmd_datagen(&sim, d, cli.json)?,
        Command::Run(r) => cmd_run(&sim, r, cli.json)?,
        Command::Oracle(q) => cmd_oracle(&sim, q, cli.json)?,
        Command::Sweep(s) => cmd_sweep(&sim, &file.sim, s, cli.json)?,
        Command::Cache { action } => cmd_cache(&sim, action, cli.json, state.is_some())?,
    }
    if let Some(s) = &state {
        s.save(&sim)?;
    }
    Ok(())
}

fn load_fault_plan(path: &Path) -> Result<FaultPlan> {
    ConfigFile::load(path)
        .with_context(|| format!("loading {}", path.display()))?
        .faults
        .with_context(|| format!("{} has no fault.* settings", path.display()))
}

fn spec(d: &DataArgs) -> DataGenSpec {
    DataGenSpec::new(d.sf, d.seed)
}

/// The stored dataset for `d`, generated on first use.
fn dataset(sim: &Simulator, d: &DataArgs) -> Result<Catalog> {
    let spec = spec(d);
    if let Some(c) = Catalog::load(sim, &spec.bucket, &spec.catalog_key())? {
        return Ok(c);
    }
    Ok(datagen(sim, &spec)?)
}

fn query_text(q: &QueryArgs) -> Result<String> {
    match (&q.sql, q.tpch) {
        (Some(sql), None) => Ok(sql.clone()),
        (None, Some(n)) => tpch::by_number(n)
            .map(str::to_string)
            .with_context(|| format!("TPC-H query {n} is not supported (1, 6, 12)")),
        (Some(_), Some(_)) => bail!("give either SQL text or --tpch, not both"),
        (None, None) => bail!("no query: give SQL text or --tpch"),
    }
}

fn cmd_datagen(sim: &Simulator, d: &DataArgs, as_json: bool) -> Result<()> {
    let catalog = datagen(sim, &spec(d))?;
    let mut tables = vec![];
    for name in ["lineitem", "orders"] {
        let (_, m) = catalog.resolve(name)?;
        tables.push(json!({
            "table": name,
            "version": m.version,
            "files": m.objects.len(),
            "rows": m.total_rows(),
            "bytes": m.total_bytes(),
        }));
    }
    if as_json {
        println!("{}", serde_json::to_string_pretty(&json!({ "scale_factor": d.sf, "tables": tables }))?);
    } else {
        for t in &tables {
            println!(
                "{:<9} {:>10} rows {:>12} bytes {:>4} files  version {}",
                t["table"].as_str().unwrap_or(""),
                t["rows"],
                t["bytes"],
                t["files"],
                t["version"].as_str().unwrap_or("")
            );
        }
    }
    Ok(())
}

fn cmd_run(sim: &Simulator, r: &RunArgs, as_json: bool) -> Result<()> {
    let sql = query_text(&r.query)?;
    let catalog = dataset(sim, &r.query.data)?;
    let config = EngineConfig {
        use_cache: !r.no_cache,
        ..EngineConfig::default()
    };
    let engine = Engine::new(sim, catalog, config);
    let mut reports: Vec<RunReport> = vec![];
    for _ in 0..r.repeat.max(1) {
        let batch: Vec<Result<RunReport, _>> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..r.concurrency.max(1))
                .map(|_| s.spawn(|| engine.run_query(&sql)))
                .collect();
            handles.into_iter().map(|h| h.join().expect("coordinator panicked")).collect()
        });
        for report in batch {
            reports.push(report?);
        }
    }
    let mut latencies: Vec<f64> = reports.iter().map(|r| r.latency_ms).collect();
    latencies.sort_by(f64::total_cmp);
    let median = latencies[latencies.len() / 2];
    let first = &reports[0];
    let batches = read_result(sim, first)?;
    if as_json {
        println!(
            "{}",
            serde_json::to_string_pretty(&json!({
                "median_latency_ms": median,
                "runs": reports,
                "result": rows_json(&batches),
            }))?
        );
        return Ok(());
    }
    print_table(&batches);
    println!();
    for rep in &reports {
        let hits = rep.stages.iter().filter(|s| s.cache_hit).count();
        let retriggers: u32 = rep.stages.iter().map(|s| s.retriggers).sum();
        println!(
            "{}: {:.1} ms, {:.6} cents, {} invocations, {} stages ({} cached), {} retriggers, {} bytes scanned",
            rep.qid,
            rep.latency_ms,
            rep.total_cents,
            rep.invocations,
            rep.stages.len(),
            hits,
            retriggers,
            rep.bytes_scanned
        );
    }
    if reports.len() > 1 {
        println!("median latency {median:.1} ms over {} runs", reports.len());
    }
    println!("cost breakdown of {}:", first.qid);
    for (category, cents) in &first.cost_cents {
        println!("  {category:<16} {cents:.8} cents");
    }
    Ok(())
}

fn cmd_oracle(sim: &Simulator, q: &QueryArgs, as_json: bool) -> Result<()> {
    let sql = query_text(q)?;
    let catalog = dataset(sim, &q.data)?;
    let result = run_oracle(sim, &catalog, &sql)?;
    let names: Vec<String> = result.schema.fields.iter().map(|f| f.name.clone()).collect();
    if as_json {
        let rows: Vec<Vec<String>> = result.rows.iter().map(|r| r.iter().map(ScalarValue::to_string).collect()).collect();
        println!("{}", serde_json::to_string_pretty(&json!({ "columns": names, "rows": rows }))?);
    } else {
        print_rows(&names, result.rows.iter().map(|r| r.iter().map(ScalarValue::to_string).collect()));
    }
    Ok(())
}

fn cmd_sweep(sim: &Simulator, sim_config: &SimConfig, s: &SweepArgs, as_json: bool) -> Result<()> {
    let mut sets = vec![];
    for &sf in &s.sfs {
        let d = DataArgs { sf, seed: s.seed };
        sets.push((sf, dataset(sim, &d)?));
    }
    let rows = elasticity_sweep(sim, sim_config, &sets, &EngineConfig::default())?;
    let ratio = latency_ratio(&rows);
    if as_json {
        println!("{}", serde_json::to_string_pretty(&json!({ "rows": rows, "latency_ratio": ratio }))?);
        return Ok(());
    }
    println!(
        "{:>8} {:>10} {:>10} {:>11} {:>12} {:>6} {:>10}",
        "sf", "q1 ms", "q6 ms", "q1+q6 ms", "cents", "inv", "retriggers"
    );
    for r in &rows {
        println!(
            "{:>8} {:>10.1} {:>10.1} {:>11.1} {:>12.6} {:>6} {:>10}",
            r.scale_factor, r.q1_ms, r.q6_ms, r.latency_ms, r.cost_cents, r.invocations, r.retriggers
        );
    }
    println!("latency ratio max/min: {ratio:.2}");
    Ok(())
}

fn cmd_cache(sim: &Simulator, action: &CacheAction, as_json: bool, persistent: bool) -> Result<()> {
    if !persistent {
        eprintln!("note: without --state the cache starts empty in every invocation");
    }
    match action {
        CacheAction::List => {
            let entries = registry::list(sim);
            if as_json {
                println!("{}", serde_json::to_string_pretty(&entries)?);
            } else {
                for e in &entries {
                    println!(
                        "{} pipeline {} partitions {} objects {} by {}",
                        e.cache_key,
                        e.pipeline,
                        e.partition_count,
                        e.outputs.len(),
                        e.creator_qid
                    );
                }
                println!("{} entries", entries.len());
            }
        }
        CacheAction::Clear => {
            let n = registry::clear(sim);
            if as_json {
                println!("{}", json!({ "cleared": n }));
            } else {
                println!("cleared {n} entries");
            }
        }
    }
    Ok(())
}

fn rows_json(batches: &[RecordBatch]) -> serde_json::Value {
    let columns: Vec<String> = batches
        .first()
        .map(|b| b.schema.fields.iter().map(|f| f.name.clone()).collect())
        .unwrap_or_default();
    let rows: Vec<Vec<String>> = batches
        .iter()
        .flat_map(|b| (0..b.num_rows()).map(move |i| b.row(i).iter().map(ScalarValue::to_string).collect()))
        .collect();
    json!({ "columns": columns, "rows": rows })
}

fn print_table(batches: &[RecordBatch]) {
    let Some(first) = batches.first() else {
        println!("(no rows)");
        return;
    };
    let names: Vec<String> = first.schema.fields.iter().map(|f| f.name.clone()).collect();
    print_rows(
        &names,
        batches
            .iter()
            .flat_map(|b| (0..b.num_rows()).map(move |i| b.row(i).iter().map(ScalarValue::to_string).collect())),
    );
}

/// Column-aligned text table.
fn print_rows(names: &[String], rows: impl Iterator<Item = Vec<String>>) {
    let rows: Vec<Vec<String>> = rows.collect();
    let mut widths: Vec<usize> = names.iter().map(String::len).collect();
    for r in &rows {
        for (w, v) in widths.iter_mut().zip(r) {
            *w = (*w).max(v.len());
        }
    }
    let line = |cells: &[String]| {
        cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    println!("{}", line(names));
    println!("{}", widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  "));
    for r in &rows {
        println!("{}", line(r));
    }
    println!("({} rows)", rows.len());
}
