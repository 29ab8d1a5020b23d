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

//! Physical planning: maps a logical plan onto a DAG of pipelines separated
//! by exchanges through shared storage.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::sizing::{size_pipeline, SizingModel};
use crate::sim::StorageClass;
use crate::sql::{AggFunc, AggregateExpr, BinaryOp, BoundExpr, JoinSide, LogicalPlan, SortKey};
use crate::storage::{DataType, Field, ScalarValue, Schema, StatOp, StatPredicate};

/// Per-table byte counts used for sizing and join strategy.
pub type TableStats = BTreeMap<String, u64>;

/// Byte statistics taken from the scans' manifests.
pub fn stats_from_plan(plan: &LogicalPlan) -> TableStats {
    plan.scans()
        .into_iter()
        .filter_map(|s| match s {
            LogicalPlan::Scan { table, table_bytes, .. } => Some((table.clone(), *table_bytes)),
            _ => None,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum JoinStrategyChoice {
    #[default]
    Auto,
    Broadcast,
    Repartition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub sizing: SizingModel,
    /// Broadcast when build bytes ≤ this divided by the probe's W.
    pub broadcast_budget_bytes: u64,
    /// Exchanges writing more objects than this use the hot class.
    pub hot_exchange_objects: u64,
    /// Overrides the sized W of every scan and repartition pipeline.
    pub force_fragments: Option<u32>,
    pub join_strategy: JoinStrategyChoice,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            sizing: SizingModel::default(),
            broadcast_budget_bytes: 512 << 20,
            hot_exchange_objects: 4_096,
            force_fragments: None,
            join_strategy: JoinStrategyChoice::Auto,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggMode {
    Partial,
    Final,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JoinStrategy {
    Broadcast,
    Repartition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineSource {
    /// Columns of a table; `predicates` prune row groups by statistics.
    Scan {
        table: String,
        columns: Vec<String>,
        predicates: Vec<StatPredicate>,
    },
    /// One partition of another pipeline's exchange output.
    Exchange { pipeline: usize },
    Values { rows: Vec<Vec<ScalarValue>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhysicalOp {
    Filter {
        predicate: BoundExpr,
    },
    Project {
        exprs: Vec<(BoundExpr, String)>,
    },
    HashAggregate {
        mode: AggMode,
        group_by: Vec<(BoundExpr, String)>,
        aggregates: Vec<AggregateExpr>,
    },
    /// Probes a hash table built from `build_pipeline`'s output. Output
    /// columns follow the logical join order given by `build_side`.
    HashJoin {
        strategy: JoinStrategy,
        build_pipeline: usize,
        build_keys: Vec<BoundExpr>,
        probe_keys: Vec<BoundExpr>,
        build_side: JoinSide,
        build_schema: Schema,
    },
    Sort {
        keys: Vec<SortKey>,
    },
    Limit {
        n: u64,
    },
}

impl PhysicalOp {
    pub fn name(&self) -> &'static str {
        match self {
            PhysicalOp::Filter { .. } => "Filter",
            PhysicalOp::Project { .. } => "Project",
            PhysicalOp::HashAggregate { mode: AggMode::Partial, .. } => "HashAggregate(partial)",
            PhysicalOp::HashAggregate { mode: AggMode::Final, .. } => "HashAggregate(final)",
            PhysicalOp::HashJoin {
                strategy: JoinStrategy::Broadcast,
                ..
            } => "HashJoin(broadcast)",
            PhysicalOp::HashJoin {
                strategy: JoinStrategy::Repartition,
                ..
            } => "HashJoin(repartition)",
            PhysicalOp::Sort { .. } => "Sort",
            PhysicalOp::Limit { .. } => "Limit",
        }
    }

    /// Schema produced from an input of schema `input`.
    pub fn output_schema(&self, input: &Schema) -> Schema {
        match self {
            PhysicalOp::Filter { .. } | PhysicalOp::Sort { .. } | PhysicalOp::Limit { .. } => input.clone(),
            PhysicalOp::Project { exprs } => Schema::new(
                exprs
                    .iter()
                    .map(|(e, n)| Field::new(n.clone(), e.data_type(), true))
                    .collect(),
            ),
            PhysicalOp::HashAggregate {
                mode,
                group_by,
                aggregates,
            } => {
                let mut fields: Vec<Field> = group_by
                    .iter()
                    .map(|(e, n)| Field::new(n.clone(), e.data_type(), true))
                    .collect();
                match mode {
                    AggMode::Partial => fields.extend(partial_state_fields(aggregates)),
                    AggMode::Final => fields.extend(aggregates.iter().map(|a| {
                        let nullable = !matches!(a.func, AggFunc::Count | AggFunc::CountStar);
                        Field::new(a.name.clone(), a.data_type, nullable)
                    })),
                }
                Schema::new(fields)
            }
            PhysicalOp::HashJoin {
                build_side,
                build_schema,
                ..
            } => {
                let (l, r) = match build_side {
                    JoinSide::Left => (build_schema, input),
                    JoinSide::Right => (input, build_schema),
                };
                let mut fields = l.fields.clone();
                fields.extend(r.fields.iter().cloned());
                Schema::new(fields)
            }
        }
    }
}

/// Suffixes of the two state columns of a partial average.
pub const AVG_SUM_SUFFIX: &str = "#sum";
pub const AVG_COUNT_SUFFIX: &str = "#count";

/// Columns a partial aggregate emits per aggregate: averages carry a sum and
/// a count, everything else one column of the final type.
pub fn partial_state_fields(aggregates: &[AggregateExpr]) -> Vec<Field> {
    let mut out = Vec::new();
    for a in aggregates {
        match a.func {
            AggFunc::Avg => {
                let arg = a.arg.as_ref().expect("avg has an argument").data_type();
                let sum_type = match arg {
                    DataType::Float64 => DataType::Float64,
                    other => DataType::decimal(18, other.scale()),
                };
                out.push(Field::new(format!("{}{AVG_SUM_SUFFIX}", a.name), sum_type, true));
                out.push(Field::new(format!("{}{AVG_COUNT_SUFFIX}", a.name), DataType::Int64, false));
            }
            AggFunc::Count | AggFunc::CountStar => out.push(Field::new(a.name.clone(), DataType::Int64, false)),
            _ => out.push(Field::new(a.name.clone(), a.data_type, true)),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineSink {
    /// One object per (fragment, partition); rows go to partition
    /// `hash(keys) mod partition_count`.
    Exchange {
        partition_count: u32,
        keys: Vec<BoundExpr>,
        class: StorageClass,
    },
    /// The query result: one object per fragment, in fragment order.
    Result,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelinePlan {
    pub id: usize,
    pub source: PipelineSource,
    pub input_schema: Schema,
    pub ops: Vec<PhysicalOp>,
    pub sink: PipelineSink,
    pub output_schema: Schema,
    pub fragment_count: u32,
    /// Estimated bytes read from storage by the source.
    pub input_bytes: u64,
    /// Pipelines whose outputs this one reads.
    pub depends_on: Vec<usize>,
}

impl PipelinePlan {
    /// Objects each fragment writes: exchange partitions, or one result.
    pub fn sink_partitions(&self) -> u32 {
        match &self.sink {
            PipelineSink::Exchange { partition_count, .. } => *partition_count,
            PipelineSink::Result => 1,
        }
    }

    /// Whether splitting a fragment's input in two keeps results correct:
    /// true unless the pipeline must see all its input at once.
    pub fn splittable(&self) -> bool {
        self.ops.iter().all(|op| {
            !matches!(
                op,
                PhysicalOp::HashAggregate { mode: AggMode::Final, .. }
                    | PhysicalOp::Sort { .. }
                    | PhysicalOp::Limit { .. }
            )
        }) && !matches!(self.source, PipelineSource::Values { .. })
    }
}

/// Pipelines in topological order; the last one is the sink.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicalQueryPlan {
    pub pipelines: Vec<PipelinePlan>,
}

impl PhysicalQueryPlan {
    pub fn sink(&self) -> &PipelinePlan {
        self.pipelines.last().expect("at least one pipeline")
    }

    pub fn output_schema(&self) -> &Schema {
        &self.sink().output_schema
    }

    /// Pipelines that read `id`'s output.
    pub fn consumers(&self, id: usize) -> Vec<usize> {
        self.pipelines
            .iter()
            .filter(|p| p.depends_on.contains(&id))
            .map(|p| p.id)
            .collect()
    }

    /// Every dependency precedes its consumer, exchange partition counts
    /// match consumer fragment counts, and exactly one pipeline is the sink.
    pub fn validate(&self) -> Result<(), String> {
        let sinks = self
            .pipelines
            .iter()
            .filter(|p| p.sink == PipelineSink::Result)
            .count();
        if sinks != 1 || self.sink().sink != PipelineSink::Result {
            return Err(format!("expected exactly one trailing sink, found {sinks}"));
        }
        for (i, p) in self.pipelines.iter().enumerate() {
            if p.id != i {
                return Err(format!("pipeline {i} has id {}", p.id));
            }
            if p.fragment_count == 0 {
                return Err(format!("pipeline {i} has no fragments"));
            }
            for &d in &p.depends_on {
                if d >= i {
                    return Err(format!("pipeline {i} depends on later pipeline {d}"));
                }
                let PipelineSink::Exchange { partition_count, .. } = &self.pipelines[d].sink else {
                    return Err(format!("pipeline {i} reads the result sink {d}"));
                };
                let broadcast = p.ops.iter().any(|op| {
                    matches!(op, PhysicalOp::HashJoin { strategy: JoinStrategy::Broadcast, build_pipeline, .. } if *build_pipeline == d)
                });
                let expected = if broadcast { 1 } else { p.fragment_count };
                if *partition_count != expected {
                    return Err(format!(
                        "pipeline {d} writes {partition_count} partitions but {i} expects {expected}"
                    ));
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for PhysicalQueryPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.pipelines {
            let src = match &p.source {
                PipelineSource::Scan { table, columns, .. } => format!("Scan {table} [{}]", columns.join(", ")),
                PipelineSource::Exchange { pipeline } => format!("ExchangeRead p{pipeline}"),
                PipelineSource::Values { rows } => format!("Values ({} rows)", rows.len()),
            };
            let ops: Vec<&str> = p.ops.iter().map(|o| o.name()).collect();
            let sink = match &p.sink {
                PipelineSink::Exchange {
                    partition_count, class, ..
                } => format!("ExchangeWrite x{partition_count} ({class})"),
                PipelineSink::Result => "Result".into(),
            };
            let mut chain = vec![src];
            chain.extend(ops.iter().map(|s| s.to_string()));
            chain.push(sink);
            writeln!(f, "pipeline {} (W={}): {}", p.id, p.fragment_count, chain.join(" -> "))?;
        }
        Ok(())
    }
}

/// A pipeline still accepting operators.
struct Open {
    source: PipelineSource,
    input_schema: Schema,
    ops: Vec<PhysicalOp>,
    schema: Schema,
    input_bytes: u64,
    depends_on: Vec<usize>,
    /// Fixed worker count; `None` means sized from input bytes.
    fragments: Option<u32>,
}

impl Open {
    fn push(&mut self, op: PhysicalOp) {
        self.schema = op.output_schema(&self.schema);
        self.ops.push(op);
    }
}

struct Planner<'a> {
    stats: &'a TableStats,
    cfg: &'a PlannerConfig,
    pipelines: Vec<PipelinePlan>,
}

fn stat_op(op: BinaryOp) -> Option<StatOp> {
    Some(match op {
        BinaryOp::Eq => StatOp::Eq,
        BinaryOp::Lt => StatOp::Lt,
        BinaryOp::LtEq => StatOp::Le,
        BinaryOp::Gt => StatOp::Gt,
        BinaryOp::GtEq => StatOp::Ge,
        _ => return None,
    })
}

/// Conjuncts of the form `column op literal` usable for row-group pruning.
pub fn stat_predicates(predicate: &BoundExpr) -> Vec<StatPredicate> {
    predicate
        .conjuncts()
        .into_iter()
        .filter_map(|c| match c {
            BoundExpr::Binary { op, left, right, .. } => match (*left, *right) {
                (BoundExpr::Column { name, .. }, BoundExpr::Literal { value, .. }) if !value.is_null() => {
                    stat_op(op).map(|op| StatPredicate { column: name, op, value })
                }
                (BoundExpr::Literal { value, .. }, BoundExpr::Column { name, .. }) if !value.is_null() => {
                    stat_op(op.flip()).map(|op| StatPredicate { column: name, op, value })
                }
                _ => None,
            },
            _ => None,
        })
        .collect()
}

/// Splits a join condition into equi-key pairs (left, right) and a residual.
pub fn equi_keys(
    on: Option<&BoundExpr>,
    left: &Schema,
    right: &Schema,
) -> (Vec<(BoundExpr, BoundExpr)>, Option<BoundExpr>) {
    let in_schema = |e: &BoundExpr, s: &Schema| {
        let cols = e.columns();
        !cols.is_empty() && cols.iter().all(|c| s.index_of(c).is_some())
    };
    let mut keys = Vec::new();
    let mut residual = Vec::new();
    for c in on.map(|e| e.conjuncts()).unwrap_or_default() {
        match &c {
            BoundExpr::Binary {
                op: BinaryOp::Eq,
                left: a,
                right: b,
                ..
            } if in_schema(a, left) && in_schema(b, right) => keys.push((*a.clone(), *b.clone())),
            BoundExpr::Binary {
                op: BinaryOp::Eq,
                left: a,
                right: b,
                ..
            } if in_schema(b, left) && in_schema(a, right) => keys.push((*b.clone(), *a.clone())),
            _ => residual.push(c),
        }
    }
    (keys, BoundExpr::conjunction(residual))
}

impl Planner<'_> {
    fn plan_bytes(&self, plan: &LogicalPlan) -> u64 {
        plan.scans()
            .into_iter()
            .map(|s| match s {
                LogicalPlan::Scan { table, .. } => self.stats.get(table).copied().unwrap_or(0),
                _ => 0,
            })
            .sum()
    }

    fn width(&self, open: &Open) -> u32 {
        open.fragments.unwrap_or_else(|| {
            self.cfg
                .force_fragments
                .unwrap_or_else(|| size_pipeline(open.input_bytes, &self.cfg.sizing))
                .max(1)
        })
    }

    fn close(&mut self, open: Open, sink_partitions: Option<(u32, Vec<BoundExpr>)>) -> usize {
        let id = self.pipelines.len();
        let fragment_count = self.width(&open);
        let sink = match sink_partitions {
            None => PipelineSink::Result,
            Some((partition_count, keys)) => {
                let objects = partition_count as u64 * fragment_count as u64;
                PipelineSink::Exchange {
                    partition_count,
                    keys,
                    class: if objects > self.cfg.hot_exchange_objects {
                        StorageClass::Hot
                    } else {
                        StorageClass::Standard
                    },
                }
            }
        };
        self.pipelines.push(PipelinePlan {
            id,
            source: open.source,
            input_schema: open.input_schema,
            ops: open.ops,
            sink,
            output_schema: open.schema,
            fragment_count,
            input_bytes: open.input_bytes,
            depends_on: open.depends_on,
        });
        id
    }

    fn exchange_open(&self, producer: usize, fragments: u32, input_bytes: u64, mut deps: Vec<usize>) -> Open {
        let schema = self.pipelines[producer].output_schema.clone();
        deps.push(producer);
        deps.sort_unstable();
        deps.dedup();
        Open {
            source: PipelineSource::Exchange { pipeline: producer },
            input_schema: schema.clone(),
            ops: vec![],
            schema,
            input_bytes,
            depends_on: deps,
            fragments: Some(fragments),
        }
    }

    /// Closes `open` into a single-partition exchange and continues in one
    /// gathering fragment.
    fn gather(&mut self, open: Open) -> Open {
        if open.fragments == Some(1) {
            return open;
        }
        let bytes = open.input_bytes;
        let id = self.close(open, Some((1, vec![])));
        self.exchange_open(id, 1, bytes, vec![])
    }

    fn build(&mut self, plan: &LogicalPlan) -> Open {
        match plan {
            LogicalPlan::Scan { table, columns, schema, .. } => Open {
                source: PipelineSource::Scan {
                    table: table.clone(),
                    columns: columns.clone(),
                    predicates: vec![],
                },
                input_schema: schema.clone(),
                ops: vec![],
                schema: schema.clone(),
                input_bytes: self.stats.get(table).copied().unwrap_or(0),
                depends_on: vec![],
                fragments: None,
            },
            LogicalPlan::Values { schema, rows } => Open {
                source: PipelineSource::Values { rows: rows.clone() },
                input_schema: schema.clone(),
                ops: vec![],
                schema: schema.clone(),
                input_bytes: 0,
                depends_on: vec![],
                fragments: Some(1),
            },
            LogicalPlan::Filter { input, predicate } => {
                let mut open = self.build(input);
                if open.ops.is_empty() {
                    if let PipelineSource::Scan { predicates, .. } = &mut open.source {
                        predicates.extend(stat_predicates(predicate));
                    }
                }
                open.push(PhysicalOp::Filter {
                    predicate: predicate.clone(),
                });
                open
            }
            LogicalPlan::Project { input, exprs } => {
                let mut open = self.build(input);
                open.push(PhysicalOp::Project { exprs: exprs.clone() });
                open
            }
            LogicalPlan::Aggregate {
                input,
                group_by,
                aggregates,
            } => {
                let mut open = self.build(input);
                open.push(PhysicalOp::HashAggregate {
                    mode: AggMode::Partial,
                    group_by: group_by.clone(),
                    aggregates: aggregates.clone(),
                });
                // Grouped results are small relative to their input, so one
                // final fragment merges all partials.
                let bytes = open.input_bytes;
                let id = self.close(open, Some((1, vec![])));
                let mut fin = self.exchange_open(id, 1, bytes, vec![]);
                fin.push(PhysicalOp::HashAggregate {
                    mode: AggMode::Final,
                    group_by: group_by
                        .iter()
                        .map(|(e, n)| (BoundExpr::column(n.clone(), e.data_type()), n.clone()))
                        .collect(),
                    aggregates: aggregates.clone(),
                });
                fin
            }
            LogicalPlan::Join {
                left,
                right,
                on,
                ..
            } => {
                // Re-derive the build side from the supplied stats so that
                // planning with different statistics stays consistent.
                let build = if self.plan_bytes(left) < self.plan_bytes(right) {
                    JoinSide::Left
                } else {
                    JoinSide::Right
                };
                self.join(left, right, on.as_ref(), build)
            }
            LogicalPlan::Sort { input, keys } => {
                let open = self.build(input);
                let mut open = self.gather(open);
                open.push(PhysicalOp::Sort { keys: keys.clone() });
                open
            }
            LogicalPlan::Limit { input, n } => {
                let mut open = self.build(input);
                if open.fragments != Some(1) {
                    open.push(PhysicalOp::Limit { n: *n });
                    open = self.gather(open);
                }
                open.push(PhysicalOp::Limit { n: *n });
                open
            }
        }
    }

    fn join(&mut self, left: &LogicalPlan, right: &LogicalPlan, on: Option<&BoundExpr>, build: JoinSide) -> Open {
        let (ls, rs) = (left.schema(), right.schema());
        let (pairs, residual) = equi_keys(on, &ls, &rs);
        let (build_plan, probe_plan) = match build {
            JoinSide::Left => (left, right),
            JoinSide::Right => (right, left),
        };
        let (build_keys, probe_keys): (Vec<BoundExpr>, Vec<BoundExpr>) = pairs
            .into_iter()
            .map(|(l, r)| match build {
                JoinSide::Left => (l, r),
                JoinSide::Right => (r, l),
            })
            .unzip();
        let build_open = self.build(build_plan);
        let probe_open = self.build(probe_plan);
        let probe_w = self.width(&probe_open);
        let build_bytes = self.plan_bytes(build_plan);
        let strategy = match self.cfg.join_strategy {
            JoinStrategyChoice::Broadcast => JoinStrategy::Broadcast,
            JoinStrategyChoice::Repartition if !build_keys.is_empty() => JoinStrategy::Repartition,
            _ if build_keys.is_empty() => JoinStrategy::Broadcast,
            _ if build_bytes <= self.cfg.broadcast_budget_bytes / probe_w as u64 => JoinStrategy::Broadcast,
            _ => JoinStrategy::Repartition,
        };
        let build_schema = build_open.schema.clone();
        let join_op = |build_pipeline: usize| PhysicalOp::HashJoin {
            strategy,
            build_pipeline,
            build_keys: build_keys.clone(),
            probe_keys: probe_keys.clone(),
            build_side: build,
            build_schema: build_schema.clone(),
        };
        let mut open = match strategy {
            JoinStrategy::Broadcast => {
                let bid = self.close(build_open, Some((1, vec![])));
                let mut probe = probe_open;
                probe.depends_on.push(bid);
                probe.input_bytes += build_bytes;
                probe.push(join_op(bid));
                probe
            }
            JoinStrategy::Repartition => {
                let bytes = build_open.input_bytes + probe_open.input_bytes;
                let w = self
                    .cfg
                    .force_fragments
                    .unwrap_or_else(|| size_pipeline(bytes, &self.cfg.sizing))
                    .max(1);
                let bid = self.close(build_open, Some((w, build_keys.clone())));
                let pid = self.close(probe_open, Some((w, probe_keys.clone())));
                let mut open = self.exchange_open(pid, w, bytes, vec![bid]);
                open.push(join_op(bid));
                open
            }
        };
        if let Some(r) = residual {
            open.push(PhysicalOp::Filter { predicate: r });
        }
        open
    }
}

/// Maps an optimized logical plan to pipelines. `stats` supplies per-table
/// bytes; missing tables count as empty.
pub fn plan_physical(plan: &LogicalPlan, stats: &TableStats, cfg: &PlannerConfig) -> PhysicalQueryPlan {
    let mut planner = Planner {
        stats,
        cfg,
        pipelines: Vec::new(),
    };
    let open = planner.build(plan);
    planner.close(open, None);
    PhysicalQueryPlan {
        pipelines: planner.pipelines,
    }
}
