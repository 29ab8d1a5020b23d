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


//! Acceptance criteria 1 to 10. Each criterion prints one PASS/FAIL line;
//! the test fails if any criterion fails.
//!
//! Criteria run sequentially in a single test over one base simulator that
//! holds every generated dataset. Each query run forks that storage, so runs
//! never share clocks, caches or sandboxes unless a criterion asks for it.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use skylite::bench::{compare_with_oracle, datagen, elasticity_sweep, latency_ratio, run_oracle, DataGenSpec};
use skylite::exec::agg::HashAggregate;
use skylite::exec::coordinator::{read_result, result_bytes, Engine, EngineConfig, QueryError, RunOptions, RunReport};
use skylite::exec::hash::partition_rows;
use skylite::exec::join::HashJoin;
use skylite::exec::ops::{OpContext, Operator};
use skylite::exec::registry;
use skylite::exec::worker::parse_tag;
use skylite::optimizer::{AggMode, PhysicalOp};
use skylite::sim::{
    ByteRange, Cents, CostCategory, FaultPlan, FaultScope, FunctionSpec, InvocationOutcome, InvokeRequest, SimConfig,
    SimEventKind, Simulator, StorageClass,
};
use skylite::sql::ast::{Expr, FromItem, IntervalUnit, Join, Literal, OrderByItem, SelectItem, TableRef, UnaryOp};
use skylite::sql::{parse, tpch, AggFunc, AggregateExpr, BinaryOp, BoundExpr, JoinSide, Query};
use skylite::storage::{
    read_file, write_columnar_file, Catalog, Compression, DataType, Field, RecordBatch, ScalarValue, Schema,
    WriteOptions,
};

type Outcome = Result<String, String>;

const SEED: u64 = 42;

/// One simulator holding every dataset, keyed by scale factor.
struct Datasets {
    sim: Simulator,
    catalogs: Vec<(f64, Catalog)>,
}

impl Datasets {
    fn new() -> Self {
        Self {
            sim: Simulator::new(SimConfig::default()),
            catalogs: vec![],
        }
    }

    fn catalog(&mut self, sf: f64) -> Catalog {
        if let Some((_, c)) = self.catalogs.iter().find(|(s, _)| *s == sf) {
            return c.clone();
        }
        let c = datagen(&self.sim, &DataGenSpec::new(sf, SEED)).expect("datagen");
        self.catalogs.push((sf, c.clone()));
        c
    }

    fn fork(&self) -> Simulator {
        self.sim.fork_storage(SimConfig::default(), None)
    }

    fn fork_with(&self, faults: FaultPlan) -> Simulator {
        self.sim.fork_storage(SimConfig::default(), Some(faults))
    }
}

fn cold_config() -> EngineConfig {
    EngineConfig {
        use_cache: false,
        ..EngineConfig::default()
    }
}

fn run(sim: &Simulator, catalog: &Catalog, config: EngineConfig, sql: &str) -> Result<RunReport, String> {
    Engine::new(sim, catalog.clone(), config).run_query(sql).map_err(|e| e.to_string())
}

fn bytes_of(sim: &Simulator, report: &RunReport) -> Result<Vec<u8>, String> {
    result_bytes(sim, report).map_err(|e| e.to_string())
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Invocation events of query `qid`: (pipeline, fragment, attempt, id, parent).
fn invocations_of(sim: &Simulator, qid: &str) -> Vec<(usize, String, u32, u64, Option<u64>)> {
    sim.events()
        .into_iter()
        .filter_map(|e| match e.kind {
            SimEventKind::Invoke { id, parent, tag, .. } => {
                let (q, p, f, a) = parse_tag(&tag)?;
                (q == qid).then(|| (p, f, a, id.0, parent.map(|p| p.0)))
            }
            _ => None,
        })
        .collect()
}

// ---------------------------------------------------------------------------
// 1. Oracle equivalence

fn oracle_equivalence(data: &mut Datasets) -> Outcome {
    let started = Instant::now();
    let mut runs = 0;
    for sf in [0.001, 0.01, 0.1] {
        let catalog = data.catalog(sf);
        for (name, sql) in [("q1", tpch::Q1), ("q6", tpch::Q6), ("q12", tpch::Q12)] {
            let want = run_oracle(&data.sim, &catalog, sql).map_err(|e| format!("{name} oracle: {e}"))?;
            for w in [1u32, 2, 7, 16] {
                let sim = data.fork();
                let mut config = cold_config();
                config.planner.force_fragments = Some(w);
                let report = run(&sim, &catalog, config, sql).map_err(|e| format!("{name} sf={sf} W={w}: {e}"))?;
                let got = read_result(&sim, &report).map_err(|e| e.to_string())?;
                compare_with_oracle(&want, &got, 1e-9).map_err(|e| format!("{name} sf={sf} W={w}: {e}"))?;
                runs += 1;
            }
        }
    }
    let elapsed = started.elapsed();
    ensure(elapsed < Duration::from_secs(300), || format!("took {elapsed:.1?}, limit 5 min"))?;
    Ok(format!("{runs} runs match the reference executor in {elapsed:.1?}"))
}

// ---------------------------------------------------------------------------
// 2. Fault tolerance

fn fault_tolerance(data: &mut Datasets) -> Outcome {
    let catalog = data.catalog(0.01);
    let clean = data.fork();
    let reference = run(&clean, &catalog, cold_config(), tpch::Q12)?;
    let want = bytes_of(&clean, &reference)?;
    let max_attempts = EngineConfig::default().retry.max_attempts;
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let (mut retriggers, mut crashes, mut deepest) = (0u32, 0usize, 0u32);
    for i in 0..20 {
        let plan = FaultPlan {
            straggler_fraction: rng.gen_range(0.0..=0.3),
            straggler_slowdown: rng.gen_range(1.0..=10.0),
            crash_fraction: rng.gen_range(0.0..=0.1),
            scope: [FaultScope::Invocation, FaultScope::StorageRequest, FaultScope::All][i % 3],
            rng_seed: rng.gen(),
        };
        let sim = data.fork_with(plan.clone());
        let report = run(&sim, &catalog, cold_config(), tpch::Q12).map_err(|e| format!("plan {i} {plan:?}: {e}"))?;
        let got = bytes_of(&sim, &report)?;
        ensure(got == want, || format!("plan {i} {plan:?}: result bytes differ"))?;
        let attempts = invocations_of(&sim, &report.qid);
        let top = attempts.iter().map(|(_, _, a, _, _)| *a).max().unwrap_or(0);
        ensure(top < max_attempts, || format!("plan {i}: attempt {top} exceeds budget {max_attempts}"))?;
        deepest = deepest.max(top + 1);
        retriggers += report.stages.iter().map(|s| s.retriggers).sum::<u32>();
        crashes += sim
            .events()
            .iter()
            .filter(|e| matches!(e.kind, SimEventKind::Crash { .. }))
            .count();
    }
    Ok(format!(
        "20 plans identical; {crashes} crashes, {retriggers} retriggers, at most {deepest} attempts"
    ))
}

// ---------------------------------------------------------------------------
// 3. Two-level invocation

fn two_level_invocation(data: &mut Datasets) -> Outcome {
    let catalog = data.catalog(0.01);
    let mut notes = vec![];
    for w in [16u32, 65, 100, 400] {
        let sim = data.fork();
        let mut config = cold_config();
        config.planner.force_fragments = Some(w);
        // The default threshold (64) would run W=16 directly.
        config.two_level_threshold = 8;
        let report = run(&sim, &catalog, config, tpch::Q6)?;
        let stage = report
            .stages
            .iter()
            .find(|s| s.fragments == w)
            .ok_or_else(|| format!("W={w}: no stage with {w} fragments"))?;
        ensure(stage.two_level, || format!("W={w}: stage ran direct"))?;
        let inv: Vec<_> = invocations_of(&sim, &report.qid)
            .into_iter()
            .filter(|(p, _, a, _, _)| *p == stage.pipeline && *a == 0)
            .collect();
        let ids: BTreeMap<u64, Option<u64>> = inv.iter().map(|(_, _, _, id, parent)| (*id, *parent)).collect();
        let roots = ids.values().filter(|p| p.is_none()).count();
        let depth_two = ids
            .values()
            .flatten()
            .all(|parent| ids.get(parent).is_some_and(|pp| pp.is_none()));
        let fragments: BTreeSet<&String> = inv.iter().map(|(_, f, _, _, _)| f).collect();
        let want_roots = (1..).find(|r: &usize| r * r >= w as usize).unwrap();
        ensure(inv.len() == w as usize && fragments.len() == w as usize, || {
            format!("W={w}: {} invocations over {} fragments", inv.len(), fragments.len())
        })?;
        ensure(roots == want_roots, || format!("W={w}: {roots} roots, want {want_roots}"))?;
        ensure(depth_two, || format!("W={w}: invocation tree deeper than 2"))?;
        notes.push(format!("W={w}:{roots} roots"));
    }
    Ok(notes.join(", "))
}

// ---------------------------------------------------------------------------
// 4. Result cache

fn result_cache(data: &mut Datasets) -> Outcome {
    let sf = 0.01;
    let catalog = data.catalog(sf);
    let sim = data.fork();
    let engine = Engine::new(&sim, catalog, EngineConfig::default());
    let first = engine.run_query(tpch::Q12).map_err(|e| e.to_string())?;
    let second = engine.run_query(tpch::Q12).map_err(|e| e.to_string())?;
    ensure(second.invocations == 0, || format!("second run made {} invocations", second.invocations))?;
    let (c1, c2) = (first.compute_cents(), second.compute_cents());
    ensure(c1 > 0.0 && c1 >= 10.0 * c2, || format!("compute {c1} then {c2} cents"))?;
    ensure(bytes_of(&sim, &first)? == bytes_of(&sim, &second)?, || "cached bytes differ".into())?;
    let regenerated = datagen(&sim, &DataGenSpec::new(sf, SEED)).map_err(|e| e.to_string())?;
    let third = Engine::new(&sim, regenerated, EngineConfig::default())
        .run_query(tpch::Q12)
        .map_err(|e| e.to_string())?;
    ensure(third.invocations > 0 && third.stages.iter().all(|s| !s.cache_hit), || {
        "run after regeneration hit the cache".into()
    })?;
    ensure(bytes_of(&sim, &third)? == bytes_of(&sim, &first)?, || "regenerated result differs".into())?;
    Ok(format!(
        "hit: 0 invocations, compute {c1:.6} -> {c2:.6} cents; regeneration missed with {} invocations",
        third.invocations
    ))
}

// ---------------------------------------------------------------------------
// 5. Prices

fn prices(_: &mut Datasets) -> Outcome {
    let sim = Simulator::new(SimConfig::default());
    let cost_since = |mark: usize, c: CostCategory| sim.ledger_since(mark).total_cost(Some(c));
    let exact = |got: Cents, scale: i128, want_cents: f64, what: &str| {
        let got = got.picocents() * scale;
        let want = Cents::from_cents(want_cents).picocents();
        ensure(got == want, || format!("{what}: {got} pc, want {want} pc"))
    };

    sim.import_object("b", "small", vec![7u8; 64].into(), StorageClass::Standard);
    let mark = sim.ledger_len();
    for _ in 0..1_000 {
        sim.get_object_range("b", "small", ByteRange::full(), sim.now()).map_err(|e| e.to_string())?;
    }
    exact(cost_since(mark, CostCategory::RequestsRead), 1_000, 40.0, "1M reads")?;

    let mark = sim.ledger_len();
    for i in 0..1_000 {
        sim.put_object("b", &format!("w{i}"), vec![1u8; 16], StorageClass::Standard, sim.now())
            .map_err(|e| e.to_string())?;
    }
    exact(cost_since(mark, CostCategory::RequestsWrite), 1_000, 500.0, "1M writes")?;

    let mut hourly = vec![];
    for mib in [128u32, 1024, 10_240] {
        let mark = sim.ledger_len();
        let spec = FunctionSpec::new(format!("hour-{mib}"), mib).map_err(|e| e.to_string())?;
        let req = InvokeRequest::new(spec, Vec::new(), sim.now()).fault_exempt();
        sim.invoke(req, Box::new(|_, ctx| InvocationOutcome::Finished(ctx.start_time + 3_600_000_000)))
            .map_err(|e| e.to_string())?;
        sim.run_until_idle();
        let per_gib_hour = cost_since(mark, CostCategory::ComputeGibS).as_cents() * 1024.0 / mib as f64;
        ensure((3.84 - 1e-9..=4.80 + 1e-9).contains(&per_gib_hour), || {
            format!("{mib} MiB: {per_gib_hour} cents per GiB-hour")
        })?;
        hourly.push(per_gib_hour);
    }

    sim.import_object("b", "hot", vec![3u8; 1 << 20].into(), StorageClass::Hot);
    let mark = sim.ledger_len();
    sim.get_object_range("b", "hot", ByteRange::full(), sim.now()).map_err(|e| e.to_string())?;
    exact(cost_since(mark, CostCategory::TransferGib), 1_024, 0.15, "hot read transfer")?;

    Ok(format!(
        "reads 40, writes 500, GiB-hour {:.2}..{:.2}, hot transfer 0.15 cents",
        hourly[2], hourly[0]
    ))
}

// ---------------------------------------------------------------------------
// 6. Latency distributions

fn latency_distributions(_: &mut Datasets) -> Outcome {
    const N: usize = 100_000;
    let sim = Simulator::new(SimConfig::default());
    let cfg = SimConfig::default().latency;

    // Each probe uses its own function, so every start is cold.
    let mut cold = Vec::with_capacity(N);
    for batch in 0..N / 500 {
        for i in 0..500 {
            let spec = FunctionSpec::new(format!("probe-{batch}-{i}"), 128).map_err(|e| e.to_string())?;
            let receipt = sim
                .invoke(InvokeRequest::new(spec, Vec::new(), sim.now()), Box::new(|_, ctx| InvocationOutcome::Finished(ctx.start_time)))
                .map_err(|e| e.to_string())?;
            ensure(receipt.start_kind == skylite::sim::StartKind::Cold, || "warm start".into())?;
            cold.push((receipt.start_time - sim.now()) as f64 / 1e3);
        }
        sim.run_until_idle();
    }
    let cold_median = median(&mut cold);
    let (lo, hi) = (cold[0], cold[N - 1]);
    ensure((cold_median / cfg.lambda_cold_start.median_ms - 1.0).abs() <= 0.10, || {
        format!("cold median {cold_median:.1} ms")
    })?;
    ensure(lo >= 122.0 && hi <= 451.0, || format!("cold samples span [{lo:.1}, {hi:.1}] ms"))?;
    ensure((cfg.lambda_cold_start.median_ms - 177.0).abs() < 1e-9, || "cold median not 177 ms".into())?;

    sim.import_object("b", "k", vec![0u8; 1_024].into(), StorageClass::Standard);
    let mut reads = Vec::with_capacity(N);
    for _ in 0..N {
        let r = sim.get_object_range("b", "k", ByteRange::full(), sim.now()).map_err(|e| e.to_string())?;
        reads.push(r.first_byte_us as f64 / 1e3);
    }
    let read_median = median(&mut reads);
    ensure((read_median / 27.0 - 1.0).abs() <= 0.10, || format!("read median {read_median:.2} ms"))?;
    Ok(format!(
        "cold median {cold_median:.1} ms in [{lo:.1}, {hi:.1}], standard read median {read_median:.2} ms"
    ))
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

// ---------------------------------------------------------------------------
// 7. Elastic scaling

fn elastic_scaling(data: &mut Datasets) -> Outcome {
    let sets: Vec<(f64, Catalog)> = [0.001, 0.01, 0.1, 1.0].into_iter().map(|sf| (sf, data.catalog(sf))).collect();
    let rows = elasticity_sweep(&data.sim, &SimConfig::default(), &sets, &EngineConfig::default())
        .map_err(|e| e.to_string())?;
    let ratio = latency_ratio(&rows);
    let detail = rows
        .iter()
        .map(|r| format!("sf{}={:.0}ms", r.scale_factor, r.latency_ms))
        .collect::<Vec<_>>()
        .join(" ");
    ensure(ratio < 10.0, || format!("ratio {ratio:.2} ({detail})"))?;
    Ok(format!("ratio {ratio:.2} ({detail})"))
}

// ---------------------------------------------------------------------------
// 8. Projection and pruning

fn scan_selectivity(data: &mut Datasets) -> Outcome {
    let catalog = data.catalog(0.1);
    let (_, manifest) = catalog.resolve("lineitem").map_err(|e| e.to_string())?;
    let keys: BTreeSet<(String, String)> =
        manifest.objects.iter().map(|o| (o.bucket.clone(), o.key.clone())).collect();
    let total = manifest.total_bytes();
    let sim = data.fork();
    let mark = sim.event_count();
    run(&sim, &catalog, cold_config(), tpch::Q6)?;
    let fetched: u64 = sim
        .events_since(mark)
        .into_iter()
        .filter_map(|e| match e.kind {
            SimEventKind::Get { bucket, key, bytes, ok: true } if keys.contains(&(bucket.clone(), key.clone())) => Some(bytes),
            _ => None,
        })
        .sum();
    let share = fetched as f64 / total as f64;
    ensure(share < 0.45, || format!("fetched {:.1}% of lineitem", share * 100.0))?;
    Ok(format!("fetched {fetched} of {total} lineitem bytes ({:.1}%)", share * 100.0))
}

// ---------------------------------------------------------------------------
// 9. Property suites

fn property_suites(_: &mut Datasets) -> Outcome {
    let mut notes = vec![];
    for (name, check) in [
        ("format roundtrip", prop_format_roundtrip as fn() -> Result<(), String>),
        ("partial/final additivity", prop_additivity),
        ("broadcast equals repartition", prop_join_strategies),
        ("parse-print-parse", prop_parse_print),
    ] {
        check().map_err(|e| format!("{name}: {e}"))?;
        notes.push(name);
    }
    Ok(format!("1000 cases each: {}", notes.join(", ")))
}

fn runner() -> TestRunner {
    TestRunner::new(PropConfig {
        cases: 1_000,
        failure_persistence: None,
        ..PropConfig::default()
    })
}

fn value_for(dt: DataType, nullable: bool) -> BoxedStrategy<ScalarValue> {
    let v: BoxedStrategy<ScalarValue> = match dt {
        DataType::Int64 => any::<i64>().prop_map(ScalarValue::Int64).boxed(),
        DataType::Float64 => any::<f64>().prop_map(ScalarValue::Float64).boxed(),
        DataType::Decimal { scale, .. } => (-999_999_999_999_999i64..=999_999_999_999_999)
            .prop_map(move |value| ScalarValue::Decimal { value, scale })
            .boxed(),
        DataType::Utf8 => ".{0,12}".prop_map(ScalarValue::Utf8).boxed(),
        DataType::Date => (-50_000i32..50_000).prop_map(ScalarValue::Date).boxed(),
        DataType::Bool => any::<bool>().prop_map(ScalarValue::Bool).boxed(),
    };
    if nullable {
        proptest::option::weighted(0.8, v).prop_map(|o| o.unwrap_or(ScalarValue::Null)).boxed()
    } else {
        v
    }
}

/// Bitwise equality: same variant, same decimal scale, same float bits.
fn identical(a: &ScalarValue, b: &ScalarValue) -> bool {
    use ScalarValue as S;
    match (a, b) {
        (S::Float64(x), S::Float64(y)) => x.to_bits() == y.to_bits(),
        (S::Decimal { value: v1, scale: s1 }, S::Decimal { value: v2, scale: s2 }) => v1 == v2 && s1 == s2,
        (S::Null, S::Null) => true,
        (S::Int64(x), S::Int64(y)) => x == y,
        (S::Utf8(x), S::Utf8(y)) => x == y,
        (S::Date(x), S::Date(y)) => x == y,
        (S::Bool(x), S::Bool(y)) => x == y,
        _ => false,
    }
}

fn prop_format_roundtrip() -> Result<(), String> {
    let types = prop_oneof![
        Just(DataType::Int64),
        Just(DataType::Float64),
        (0u8..=6).prop_map(|s| DataType::decimal(15, s)),
        Just(DataType::Utf8),
        Just(DataType::Date),
        Just(DataType::Bool),
    ];
    let strategy = (proptest::collection::vec((types, any::<bool>()), 1..6), 1usize..40, any::<bool>())
        .prop_flat_map(|(cols, group, lz4)| {
            let row = cols.iter().map(|(dt, n)| value_for(*dt, *n)).collect::<Vec<_>>();
            (Just(cols), proptest::collection::vec(row, 0..120), Just(group), Just(lz4))
        });
    runner()
        .run(&strategy, |(cols, rows, group, lz4)| {
            let schema = Arc::new(Schema::new(
                cols.iter()
                    .enumerate()
                    .map(|(i, (dt, n))| Field::new(format!("c{i}"), *dt, *n))
                    .collect(),
            ));
            let batch = RecordBatch::from_rows(schema.clone(), &rows).unwrap();
            let options = WriteOptions {
                row_group_rows: group,
                compression: if lz4 { Compression::Lz4 } else { Compression::None },
            };
            let file = write_columnar_file(&batch.chunks(17), schema.clone(), options).unwrap();
            let (footer, back) = read_file(&file).unwrap();
            prop_assert_eq!(footer.total_rows(), rows.len() as u64);
            let back = RecordBatch::concat(schema, &back);
            prop_assert_eq!(back.num_rows(), rows.len());
            for (i, want) in rows.iter().enumerate() {
                let got = back.row(i);
                prop_assert!(got.iter().zip(want).all(|(a, b)| identical(a, b)), "row {}: {:?} != {:?}", i, got, want);
            }
            Ok(())
        })
        .map_err(|e| e.to_string())
}

fn agg_ctx() -> OpContext {
    OpContext {
        memory_budget: 1 << 30,
        batch_rows: 1_024,
    }
}

fn aggregate(mode: AggMode, keyed: bool, input: &Schema, aggs: &[AggregateExpr], batches: Vec<RecordBatch>) -> RecordBatch {
    let group_by = if keyed {
        vec![(BoundExpr::column("g", input.field("g").unwrap().data_type), "g".to_string())]
    } else {
        vec![]
    };
    let op = PhysicalOp::HashAggregate {
        mode,
        group_by: group_by.clone(),
        aggregates: aggs.to_vec(),
    };
    let schema = Arc::new(op.output_schema(input));
    let mut agg = HashAggregate::new(mode, &group_by, aggs, schema.clone(), agg_ctx()).unwrap();
    for b in batches {
        agg.push(b, &mut vec![]).unwrap();
    }
    let mut out = vec![];
    agg.finish(&mut out).unwrap();
    RecordBatch::concat(schema, &out)
}

fn two_phase(keyed: bool, aggs: &[AggregateExpr], parts: Vec<RecordBatch>) -> RecordBatch {
    let input = parts[0].schema.clone();
    let partials: Vec<RecordBatch> = parts
        .into_iter()
        .map(|p| aggregate(AggMode::Partial, keyed, &input, aggs, vec![p]))
        .collect();
    let pschema = partials[0].schema.clone();
    aggregate(AggMode::Final, keyed, &pschema, aggs, partials)
}

fn sorted_rows(b: &RecordBatch) -> Vec<Vec<ScalarValue>> {
    let mut rows: Vec<Vec<ScalarValue>> = (0..b.num_rows()).map(|i| b.row(i)).collect();
    rows.sort();
    rows
}

fn prop_additivity() -> Result<(), String> {
    let x = BoundExpr::column("x", DataType::decimal(15, 2));
    let aggs: Vec<AggregateExpr> = [
        (AggFunc::Sum, "s"),
        (AggFunc::Avg, "a"),
        (AggFunc::Count, "c"),
        (AggFunc::CountStar, "n"),
        (AggFunc::Min, "lo"),
        (AggFunc::Max, "hi"),
    ]
    .into_iter()
    .map(|(func, name)| AggregateExpr {
        func,
        arg: (func != AggFunc::CountStar).then(|| x.clone()),
        name: name.into(),
        data_type: AggregateExpr::result_type(func, Some(x.data_type())).unwrap(),
    })
    .collect();
    let schema = Arc::new(Schema::new(vec![
        Field::new("g", DataType::Utf8, false),
        Field::new("x", DataType::decimal(15, 2), true),
    ]));
    let strategy = (
        proptest::collection::vec((0u8..4, proptest::option::weighted(0.9, -1_000_000i64..1_000_000)), 0..80),
        proptest::collection::vec(0usize..80, 0..5),
    );
    runner()
        .run(&strategy, |(rows, cuts)| {
            let rows: Vec<Vec<ScalarValue>> = rows
                .iter()
                .map(|(g, x)| {
                    vec![
                        ScalarValue::Utf8(["w", "x", "y", "z"][*g as usize].into()),
                        x.map_or(ScalarValue::Null, |value| ScalarValue::Decimal { value, scale: 2 }),
                    ]
                })
                .collect();
            let mut cuts: Vec<usize> = cuts.into_iter().map(|c| c.min(rows.len())).collect();
            cuts.extend([0, rows.len()]);
            cuts.sort_unstable();
            let parts = || -> Vec<RecordBatch> {
                cuts.windows(2)
                    .map(|w| RecordBatch::from_rows(schema.clone(), &rows[w[0]..w[1]]).unwrap())
                    .collect()
            };
            let whole = || vec![RecordBatch::from_rows(schema.clone(), &rows).unwrap()];
            for keyed in [true, false] {
                let split = two_phase(keyed, &aggs, parts());
                let single = two_phase(keyed, &aggs, whole());
                prop_assert_eq!(split.num_rows(), single.num_rows());
                let (a, b) = (sorted_rows(&split), sorted_rows(&single));
                for (ra, rb) in a.iter().zip(&b) {
                    prop_assert!(ra.iter().zip(rb).all(|(x, y)| identical(x, y)), "{:?} != {:?}", ra, rb);
                }
            }
            // Independent check of the keyless sum and counts.
            let total = two_phase(false, &aggs, parts());
            let vals: Vec<i64> = rows.iter().filter_map(|r| match r[1] {
                ScalarValue::Decimal { value, .. } => Some(value),
                _ => None,
            }).collect();
            let sum = if vals.is_empty() { ScalarValue::Null } else { ScalarValue::Decimal { value: vals.iter().sum(), scale: 2 } };
            prop_assert!(identical(&total.column_by_name("s").unwrap().value(0), &sum));
            prop_assert_eq!(total.column_by_name("c").unwrap().value(0), ScalarValue::Int64(vals.len() as i64));
            prop_assert_eq!(total.column_by_name("n").unwrap().value(0), ScalarValue::Int64(rows.len() as i64));
            Ok(())
        })
        .map_err(|e| e.to_string())
}

fn prop_join_strategies() -> Result<(), String> {
    let build_schema = Arc::new(Schema::new(vec![
        Field::new("bk", DataType::Int64, true),
        Field::new("bv", DataType::Utf8, false),
    ]));
    let probe_schema = Arc::new(Schema::new(vec![
        Field::new("pk", DataType::Int64, true),
        Field::new("pv", DataType::Int64, false),
    ]));
    let out_schema = Arc::new(Schema::new(vec![
        Field::new("pk", DataType::Int64, true),
        Field::new("pv", DataType::Int64, false),
        Field::new("bk", DataType::Int64, true),
        Field::new("bv", DataType::Utf8, false),
    ]));
    let key = || proptest::option::weighted(0.9, 0i64..8);
    let strategy = (
        proptest::collection::vec((key(), "[a-c]{1,2}"), 0..40),
        proptest::collection::vec((key(), any::<i64>()), 0..60),
        0usize..60,
    );
    let bk = [BoundExpr::column("bk", DataType::Int64)];
    let pk = [BoundExpr::column("pk", DataType::Int64)];
    let join = |build: Vec<RecordBatch>, probe: Vec<RecordBatch>| -> Vec<RecordBatch> {
        let mut op = HashJoin::new(&build_schema, build, &bk, &pk, JoinSide::Right, out_schema.clone(), agg_ctx()).unwrap();
        let mut out = vec![];
        for p in probe {
            op.push(p, &mut out).unwrap();
        }
        op.finish(&mut out).unwrap();
        out
    };
    /// Rows of `b` split by the hash of column `col` into 2 partitions.
    fn repartition(b: &RecordBatch, col: &str) -> Vec<RecordBatch> {
        let parts = partition_rows(&[b.column_by_name(col).unwrap().clone()], b.num_rows(), 2);
        (0..2u32)
            .map(|p| {
                let idx: Vec<usize> = (0..b.num_rows()).filter(|&i| parts[i] == p).collect();
                b.take(&idx)
            })
            .collect()
    }
    runner()
        .run(&strategy, |(build, probe, cut)| {
            let to_key = |k: &Option<i64>| k.map_or(ScalarValue::Null, ScalarValue::Int64);
            let build_rows: Vec<Vec<ScalarValue>> =
                build.iter().map(|(k, v)| vec![to_key(k), ScalarValue::Utf8(v.clone())]).collect();
            let probe_rows: Vec<Vec<ScalarValue>> =
                probe.iter().map(|(k, v)| vec![to_key(k), ScalarValue::Int64(*v)]).collect();
            let b = RecordBatch::from_rows(build_schema.clone(), &build_rows).unwrap();
            let p = RecordBatch::from_rows(probe_schema.clone(), &probe_rows).unwrap();

            // Broadcast: the whole build side against each of 2 probe fragments.
            let cut = cut.min(p.num_rows());
            let mut broadcast = vec![];
            for frag in [p.slice(0, cut), p.slice(cut, p.num_rows() - cut)] {
                broadcast.extend(join(vec![b.clone()], vec![frag]));
            }
            // Repartition: matching hash partitions joined pairwise.
            let mut repartitioned = vec![];
            for (bp, pp) in repartition(&b, "bk").into_iter().zip(repartition(&p, "pk")) {
                repartitioned.extend(join(vec![bp], vec![pp]));
            }
            let broadcast = sorted_rows(&RecordBatch::concat(out_schema.clone(), &broadcast));
            let repartitioned = sorted_rows(&RecordBatch::concat(out_schema.clone(), &repartitioned));
            // Nested-loop reference.
            let mut expected = vec![];
            for pr in &probe_rows {
                for br in &build_rows {
                    if !pr[0].is_null() && !br[0].is_null() && pr[0] == br[0] {
                        expected.push(vec![pr[0].clone(), pr[1].clone(), br[0].clone(), br[1].clone()]);
                    }
                }
            }
            expected.sort();
            prop_assert_eq!(&broadcast, &repartitioned);
            prop_assert_eq!(&broadcast, &expected);
            Ok(())
        })
        .map_err(|e| e.to_string())
}

const RESERVED: &[&str] = &[
    "select", "from", "where", "group", "by", "order", "limit", "as", "and", "or", "not", "between", "in", "is",
    "null", "case", "when", "then", "else", "end", "join", "inner", "on", "asc", "desc", "date", "interval", "true",
    "false", "having", "distinct", "cross", "left", "right", "full", "outer", "union", "exists",
];

fn ident() -> BoxedStrategy<String> {
    "[a-z][a-z0-9_]{0,6}".prop_filter("reserved word", |s| !RESERVED.contains(&s.as_str())).boxed()
}

fn literal() -> BoxedStrategy<Literal> {
    prop_oneof![
        "[0-9]{1,6}(\\.[0-9]{1,3})?".prop_map(Literal::Number),
        "[a-zA-Z' ]{0,8}".prop_map(Literal::String),
        "(19|20)[0-9]{2}-(0[1-9]|1[0-2])-(0[1-9]|1[0-9]|2[0-8])".prop_map(Literal::Date),
        (
            "[0-9]{1,3}",
            prop_oneof![Just(IntervalUnit::Year), Just(IntervalUnit::Month), Just(IntervalUnit::Day)],
            proptest::option::of(1u32..4)
        )
            .prop_map(|(value, unit, precision)| Literal::Interval { value, unit, precision }),
        any::<bool>().prop_map(Literal::Boolean),
        Just(Literal::Null),
    ]
    .boxed()
}

fn expr() -> BoxedStrategy<Expr> {
    let leaf = prop_oneof![
        (proptest::option::of(ident()), ident()).prop_map(|(table, name)| Expr::Column { table, name }),
        literal().prop_map(Expr::Literal),
    ];
    let ops = [
        BinaryOp::Plus,
        BinaryOp::Minus,
        BinaryOp::Multiply,
        BinaryOp::Divide,
        BinaryOp::Eq,
        BinaryOp::NotEq,
        BinaryOp::Lt,
        BinaryOp::LtEq,
        BinaryOp::Gt,
        BinaryOp::GtEq,
        BinaryOp::And,
        BinaryOp::Or,
    ];
    leaf.prop_recursive(4, 48, 4, move |inner| {
        let b = |e: Expr| Box::new(e);
        prop_oneof![
            (prop_oneof![Just(UnaryOp::Not), Just(UnaryOp::Minus)], inner.clone())
                .prop_map(move |(op, e)| Expr::Unary { op, expr: b(e) }),
            (proptest::sample::select(ops.to_vec()), inner.clone(), inner.clone())
                .prop_map(|(op, l, r)| Expr::binary(op, l, r)),
            (inner.clone(), any::<bool>(), inner.clone(), inner.clone()).prop_map(move |(e, negated, lo, hi)| {
                Expr::Between { expr: b(e), negated, low: b(lo), high: b(hi) }
            }),
            (inner.clone(), any::<bool>(), proptest::collection::vec(inner.clone(), 1..4))
                .prop_map(move |(e, negated, list)| Expr::InList { expr: b(e), negated, list }),
            (inner.clone(), any::<bool>()).prop_map(move |(e, negated)| Expr::IsNull { expr: b(e), negated }),
            (
                proptest::option::of(inner.clone()),
                proptest::collection::vec((inner.clone(), inner.clone()), 1..3),
                proptest::option::of(inner.clone())
            )
                .prop_map(move |(operand, whens, else_expr)| Expr::Case {
                    operand: operand.map(b),
                    whens,
                    else_expr: else_expr.map(b),
                }),
            (ident(), proptest::collection::vec(inner.clone(), 0..3))
                .prop_map(|(name, args)| Expr::Function { name, args, star: false }),
            Just(Expr::Function { name: "count".into(), args: vec![], star: true }),
        ]
    })
    .boxed()
}

fn query() -> BoxedStrategy<Query> {
    let table = || (ident(), proptest::option::of(ident())).prop_map(|(name, alias)| TableRef { name, alias });
    let select_item = prop_oneof![
        1 => Just(SelectItem::Wildcard),
        4 => (expr(), proptest::option::of(ident())).prop_map(|(expr, alias)| SelectItem::Expr { expr, alias }),
    ];
    let from_item = (table(), proptest::collection::vec((table(), expr()), 0..2)).prop_map(|(table, joins)| FromItem {
        table,
        joins: joins.into_iter().map(|(table, on)| Join { table, on }).collect(),
    });
    (
        proptest::collection::vec(select_item, 1..4),
        proptest::collection::vec(from_item, 0..3),
        proptest::option::of(expr()),
        proptest::collection::vec(expr(), 0..3),
        proptest::collection::vec((expr(), any::<bool>()).prop_map(|(expr, asc)| OrderByItem { expr, asc }), 0..3),
        proptest::option::of(0u64..1_000_000),
    )
        .prop_map(|(select, from, selection, group_by, order_by, limit)| Query {
            select,
            from,
            selection,
            group_by,
            order_by,
            limit,
        })
        .boxed()
}

fn prop_parse_print() -> Result<(), String> {
    runner()
        .run(&query(), |q| {
            let text = q.to_string();
            let parsed = parse(&text).map_err(|e| TestCaseError::fail(format!("{e} in {text}")))?;
            prop_assert_eq!(&parsed, &q, "parse changed the tree of {}", text);
            let again = parsed.to_string();
            prop_assert_eq!(&again, &text);
            let reparsed = parse(&again).map_err(|e| TestCaseError::fail(e.to_string()))?;
            prop_assert_eq!(reparsed, parsed);
            Ok(())
        })
        .map_err(|e| e.to_string())
}

// ---------------------------------------------------------------------------
// 10. Resume from checkpoints

fn resume_from_checkpoint(data: &mut Datasets) -> Outcome {
    let catalog = data.catalog(0.01);
    let fresh_sim = data.fork();
    let fresh = run(&fresh_sim, &catalog, cold_config(), tpch::Q12)?;
    let want = bytes_of(&fresh_sim, &fresh)?;

    let sim = data.fork();
    let engine = Engine::new(&sim, catalog, cold_config());
    let options = RunOptions {
        abort_after_pipelines: Some(1),
    };
    match engine.run_query_with(tpch::Q12, &options) {
        Err(QueryError::Aborted { .. }) => {}
        other => return Err(format!("expected an abort after the first stage, got {other:?}")),
    }
    let done: BTreeSet<usize> = registry::list(&sim).iter().map(|e| e.pipeline).collect();
    ensure(done.len() == 1, || format!("{} pipelines registered before resume", done.len()))?;
    let resumed = engine.resume_query(tpch::Q12).map_err(|e| e.to_string())?;
    let rerun: Vec<_> = invocations_of(&sim, &resumed.qid)
        .into_iter()
        .filter(|(p, ..)| done.contains(p))
        .collect();
    ensure(rerun.is_empty(), || format!("{} invocations re-ran a completed stage", rerun.len()))?;
    ensure(resumed.invocations > 0, || "resume ran nothing".into())?;
    ensure(bytes_of(&sim, &resumed)? == want, || "resumed result differs from a fresh run".into())?;
    Ok(format!(
        "stage {done:?} reused; resume made {} of {} invocations",
        resumed.invocations, fresh.invocations
    ))
}

// ---------------------------------------------------------------------------

#[test]
fn acceptance() {
    let criteria: [(&str, fn(&mut Datasets) -> Outcome); 10] = [
        ("oracle equivalence", oracle_equivalence),
        ("fault tolerance", fault_tolerance),
        ("two-level invocation", two_level_invocation),
        ("result cache", result_cache),
        ("prices", prices),
        ("latency distributions", latency_distributions),
        ("elastic scaling", elastic_scaling),
        ("scan selectivity", scan_selectivity),
        ("property suites", property_suites),
        ("resume from checkpoint", resume_from_checkpoint),
    ];
    let only: Option<BTreeSet<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let mut data = Datasets::new();
    let mut failed = vec![];
    for (i, (name, check)) in criteria.iter().enumerate() {
        let n = i + 1;
        if only.as_ref().is_some_and(|o| !o.contains(&n)) {
            continue;
        }
        let started = Instant::now();
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| check(&mut data)))
            .unwrap_or_else(|p| {
                Err(p
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "panicked".into()))
            });
        let took = started.elapsed();
        match outcome {
            Ok(detail) => println!("criterion {n:>2} {name}: PASS ({detail}) [{took:.1?}]"),
            Err(why) => {
                println!("criterion {n:>2} {name}: FAIL ({why}) [{took:.1?}]");
                failed.push(n);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
