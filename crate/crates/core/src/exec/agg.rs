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

//! Hash aggregation in two phases.
//!
//! The partial phase folds raw rows into per-group state columns; the final
//! phase merges state rows from many partials. Merging is associative and
//! commutative for exact types, so any split of the input gives the same
//! final result.

use std::collections::HashMap;

use super::eval::evaluate;
use super::ops::{ExecError, OpContext, OpCounters, Operator};
use crate::optimizer::physical::{AVG_COUNT_SUFFIX, AVG_SUM_SUFFIX};
use crate::optimizer::AggMode;
use crate::sql::expr::AVG_SCALE;
use crate::sql::{AggFunc, AggregateExpr, BoundExpr};
use crate::storage::types::{checked_decimal, div_round_half_even, pow10};
use crate::storage::{Column, ColumnBuilder, ColumnData, DataType, RecordBatch, ScalarValue, SchemaRef};

/// Running state of one aggregate for one group.
#[derive(Debug, Clone, PartialEq)]
pub enum AggState {
    /// Exact sum at the argument's scale; `None` until a non-null value.
    SumExact(Option<i128>),
    SumFloat(Option<f64>),
    Count(i64),
    Min(Option<ScalarValue>),
    Max(Option<ScalarValue>),
    AvgExact { sum: i128, count: i64 },
    AvgFloat { sum: f64, count: i64 },
}

impl AggState {
    pub fn new(func: AggFunc, arg_type: Option<DataType>) -> Self {
        let float = arg_type == Some(DataType::Float64);
        match func {
            AggFunc::Sum if float => AggState::SumFloat(None),
            AggFunc::Sum => AggState::SumExact(None),
            AggFunc::Avg if float => AggState::AvgFloat { sum: 0.0, count: 0 },
            AggFunc::Avg => AggState::AvgExact { sum: 0, count: 0 },
            AggFunc::Count | AggFunc::CountStar => AggState::Count(0),
            AggFunc::Min => AggState::Min(None),
            AggFunc::Max => AggState::Max(None),
        }
    }

    fn fold(&mut self, v: &ScalarValue) {
        if v.is_null() {
            return;
        }
        match self {
            AggState::Min(cur) => {
                if cur.as_ref().map_or(true, |c| v < c) {
                    *cur = Some(v.clone());
                }
            }
            AggState::Max(cur) => {
                if cur.as_ref().map_or(true, |c| v > c) {
                    *cur = Some(v.clone());
                }
            }
            _ => unreachable!("min/max only"),
        }
    }
}

fn exact(c: &Column, i: usize) -> Option<i128> {
    if !c.is_valid(i) {
        return None;
    }
    match &c.data {
        ColumnData::Int64(v) | ColumnData::Decimal(v) => Some(v[i] as i128),
        _ => None,
    }
}

fn float(c: &Column, i: usize) -> Option<f64> {
    if !c.is_valid(i) {
        return None;
    }
    match &c.data {
        ColumnData::Float64(v) => Some(v[i]),
        _ => c.value(i).as_f64(),
    }
}

/// Folds raw row `i` of `arg` (absent for count(*)) into `s`.
pub fn update(s: &mut AggState, arg: Option<&Column>, i: usize) {
    match s {
        AggState::Count(n) => {
            if arg.map_or(true, |c| c.is_valid(i)) {
                *n += 1;
            }
        }
        AggState::SumExact(sum) => {
            if let Some(v) = exact(arg.expect("sum argument"), i) {
                *sum = Some(sum.unwrap_or(0) + v);
            }
        }
        AggState::SumFloat(sum) => {
            if let Some(v) = float(arg.expect("sum argument"), i) {
                *sum = Some(sum.unwrap_or(0.0) + v);
            }
        }
        AggState::AvgExact { sum, count } => {
            if let Some(v) = exact(arg.expect("avg argument"), i) {
                *sum += v;
                *count += 1;
            }
        }
        AggState::AvgFloat { sum, count } => {
            if let Some(v) = float(arg.expect("avg argument"), i) {
                *sum += v;
                *count += 1;
            }
        }
        AggState::Min(_) | AggState::Max(_) => s.fold(&arg.expect("min/max argument").value(i)),
    }
}

/// Merges state row `i` (one or two state columns) into `s`.
pub fn merge(s: &mut AggState, cols: &[&Column], i: usize) {
    match s {
        AggState::Count(n) => *n += exact(cols[0], i).unwrap_or(0) as i64,
        AggState::SumExact(sum) => {
            if let Some(v) = exact(cols[0], i) {
                *sum = Some(sum.unwrap_or(0) + v);
            }
        }
        AggState::SumFloat(sum) => {
            if let Some(v) = float(cols[0], i) {
                *sum = Some(sum.unwrap_or(0.0) + v);
            }
        }
        AggState::AvgExact { sum, count } => {
            *sum += exact(cols[0], i).unwrap_or(0);
            *count += exact(cols[1], i).unwrap_or(0) as i64;
        }
        AggState::AvgFloat { sum, count } => {
            *sum += float(cols[0], i).unwrap_or(0.0);
            *count += exact(cols[1], i).unwrap_or(0) as i64;
        }
        AggState::Min(_) | AggState::Max(_) => s.fold(&cols[0].value(i)),
    }
}

fn exact_value(v: i128, dt: DataType) -> Result<ScalarValue, ExecError> {
    Ok(match dt {
        DataType::Int64 => ScalarValue::Int64(
            i64::try_from(v).map_err(|_| ExecError::Eval(super::eval::EvalError::Overflow("sum".into())))?,
        ),
        DataType::Decimal { scale, .. } => ScalarValue::Decimal {
            value: checked_decimal(v)?,
            scale,
        },
        other => return Err(ExecError::Malformed(format!("exact sum typed {other}"))),
    })
}

/// Exact average at scale 6, rounded half to even.
pub fn exact_avg(sum: i128, count: i64, arg_scale: u8) -> Result<ScalarValue, ExecError> {
    if count == 0 {
        return Ok(ScalarValue::Null);
    }
    let (n, d) = if arg_scale <= AVG_SCALE {
        (sum * pow10(AVG_SCALE - arg_scale), count as i128)
    } else {
        (sum, count as i128 * pow10(arg_scale - AVG_SCALE))
    };
    Ok(ScalarValue::Decimal {
        value: checked_decimal(div_round_half_even(n, d))?,
        scale: AVG_SCALE,
    })
}

/// State values of a partial aggregate (one or two per aggregate).
pub fn partial_values(s: &AggState, a: &AggregateExpr) -> Result<Vec<ScalarValue>, ExecError> {
    Ok(match s {
        AggState::Count(n) => vec![ScalarValue::Int64(*n)],
        AggState::SumExact(None) | AggState::SumFloat(None) => vec![ScalarValue::Null],
        AggState::SumExact(Some(v)) => vec![exact_value(*v, a.data_type)?],
        AggState::SumFloat(Some(v)) => vec![ScalarValue::Float64(*v)],
        AggState::AvgExact { sum, count } => {
            let scale = a.arg.as_ref().map_or(0, |e| e.data_type().scale());
            vec![
                exact_value(*sum, DataType::decimal(18, scale))?,
                ScalarValue::Int64(*count),
            ]
        }
        AggState::AvgFloat { sum, count } => vec![ScalarValue::Float64(*sum), ScalarValue::Int64(*count)],
        AggState::Min(v) | AggState::Max(v) => vec![v.clone().unwrap_or(ScalarValue::Null)],
    })
}

pub fn final_value(s: &AggState, a: &AggregateExpr) -> Result<ScalarValue, ExecError> {
    Ok(match s {
        AggState::AvgExact { sum, count } => {
            exact_avg(*sum, *count, a.arg.as_ref().map_or(0, |e| e.data_type().scale()))?
        }
        AggState::AvgFloat { count: 0, .. } => ScalarValue::Null,
        AggState::AvgFloat { sum, count } => ScalarValue::Float64(sum / *count as f64),
        other => partial_values(other, a)?.remove(0),
    })
}

/// Names of the state columns an aggregate reads in the final phase.
fn state_columns(a: &AggregateExpr) -> Vec<String> {
    match a.func {
        AggFunc::Avg => vec![
            format!("{}{AVG_SUM_SUFFIX}", a.name),
            format!("{}{AVG_COUNT_SUFFIX}", a.name),
        ],
        _ => vec![a.name.clone()],
    }
}

pub struct HashAggregate {
    mode: AggMode,
    keys: Vec<BoundExpr>,
    aggregates: Vec<AggregateExpr>,
    schema: SchemaRef,
    groups: HashMap<Vec<ScalarValue>, usize>,
    /// Group keys in first-seen order; output follows this order.
    order: Vec<Vec<ScalarValue>>,
    states: Vec<Vec<AggState>>,
    key_bytes: u64,
    budget: u64,
    batch_rows: usize,
    counters: OpCounters,
}

impl HashAggregate {
    pub fn new(
        mode: AggMode,
        group_by: &[(BoundExpr, String)],
        aggregates: &[AggregateExpr],
        schema: SchemaRef,
        ctx: OpContext,
    ) -> Result<Self, ExecError> {
        let mut agg = Self {
            mode,
            keys: group_by.iter().map(|(e, _)| e.clone()).collect(),
            aggregates: aggregates.to_vec(),
            schema,
            groups: HashMap::new(),
            order: vec![],
            states: vec![],
            key_bytes: 0,
            budget: ctx.memory_budget,
            batch_rows: ctx.batch_rows.max(1),
            counters: OpCounters::default(),
        };
        // Without grouping keys there is always exactly one output row.
        if agg.keys.is_empty() {
            agg.group_of(vec![])?;
        }
        Ok(agg)
    }

    fn fresh_states(&self) -> Vec<AggState> {
        self.aggregates
            .iter()
            .map(|a| AggState::new(a.func, a.arg.as_ref().map(|e| e.data_type())))
            .collect()
    }

    fn group_of(&mut self, key: Vec<ScalarValue>) -> Result<usize, ExecError> {
        if let Some(&g) = self.groups.get(&key) {
            return Ok(g);
        }
        let g = self.order.len();
        self.key_bytes += 64 + 48 * self.aggregates.len() as u64
            + key.iter().map(|v| match v {
                ScalarValue::Utf8(s) => 24 + s.len() as u64,
                _ => 16,
            }).sum::<u64>();
        if self.key_bytes > self.budget {
            return Err(ExecError::OutOfBudget {
                needed: self.key_bytes,
                budget: self.budget,
            });
        }
        let states = self.fresh_states();
        self.groups.insert(key.clone(), g);
        self.order.push(key);
        self.states.push(states);
        Ok(g)
    }
}

impl Operator for HashAggregate {
    fn push(&mut self, batch: RecordBatch, _out: &mut Vec<RecordBatch>) -> Result<(), ExecError> {
        let rows = batch.num_rows();
        self.counters.rows_in += rows as u64;
        self.counters.agg_updates += (rows * self.aggregates.len()) as u64;
        let key_cols = self
            .keys
            .iter()
            .map(|e| evaluate(e, &batch))
            .collect::<Result<Vec<_>, _>>()?;
        let mut group_ids = Vec::with_capacity(rows);
        if key_cols.is_empty() {
            group_ids.resize(rows, 0);
        } else {
            for i in 0..rows {
                let key: Vec<ScalarValue> = key_cols.iter().map(|c| c.value(i)).collect();
                group_ids.push(self.group_of(key)?);
            }
        }
        for (j, a) in self.aggregates.clone().iter().enumerate() {
            match self.mode {
                AggMode::Partial => {
                    let arg = a.arg.as_ref().map(|e| evaluate(e, &batch)).transpose()?;
                    for (i, &g) in group_ids.iter().enumerate() {
                        update(&mut self.states[g][j], arg.as_ref(), i);
                    }
                }
                AggMode::Final => {
                    let cols = state_columns(a)
                        .iter()
                        .map(|n| {
                            batch
                                .column_by_name(n)
                                .ok_or_else(|| ExecError::Malformed(format!("missing state column {n}")))
                        })
                        .collect::<Result<Vec<_>, _>>()?;
                    for (i, &g) in group_ids.iter().enumerate() {
                        merge(&mut self.states[g][j], &cols, i);
                    }
                }
            }
        }
        Ok(())
    }

    fn finish(&mut self, out: &mut Vec<RecordBatch>) -> Result<(), ExecError> {
        let fields = &self.schema.fields;
        let nkeys = self.keys.len();
        for start in (0..self.order.len()).step_by(self.batch_rows) {
            let end = (start + self.batch_rows).min(self.order.len());
            let mut builders: Vec<ColumnBuilder> = fields
                .iter()
                .map(|f| ColumnBuilder::new(f.data_type, end - start))
                .collect();
            for g in start..end {
                for (k, v) in self.order[g].iter().enumerate() {
                    builders[k].push(v)?;
                }
                let mut col = nkeys;
                for (s, a) in self.states[g].iter().zip(&self.aggregates) {
                    let values = match self.mode {
                        AggMode::Partial => partial_values(s, a)?,
                        AggMode::Final => vec![final_value(s, a)?],
                    };
                    for v in values {
                        builders[col].push(&v)?;
                        col += 1;
                    }
                }
            }
            let cols = builders.into_iter().map(ColumnBuilder::finish).collect();
            out.push(RecordBatch::with_rows(self.schema.clone(), cols, end - start)?);
        }
        Ok(())
    }

    fn counters(&self) -> OpCounters {
        self.counters
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::optimizer::PhysicalOp;
    use crate::storage::{Field, Schema};
    use proptest::prelude::*;

    type S = ScalarValue;

    fn dec(v: i64) -> S {
        S::Decimal { value: v, scale: 2 }
    }

    fn input(rows: &[(&str, Option<i64>)]) -> RecordBatch {
        let schema = Arc::new(Schema::new(vec![
            Field::new("g", DataType::Utf8, false),
            Field::new("x", DataType::decimal(15, 2), true),
        ]));
        let rows: Vec<Vec<S>> = rows
            .iter()
            .map(|(g, x)| vec![S::Utf8(g.to_string()), x.map_or(S::Null, dec)])
            .collect();
        RecordBatch::from_rows(schema, &rows).unwrap()
    }

    fn aggs() -> Vec<AggregateExpr> {
        let x = BoundExpr::column("x", DataType::decimal(15, 2));
        let mk = |func, name: &str| AggregateExpr {
            func,
            arg: (func != AggFunc::CountStar).then(|| x.clone()),
            name: name.into(),
            data_type: AggregateExpr::result_type(func, Some(x.data_type())).unwrap(),
        };
        vec![
            mk(AggFunc::Sum, "s"),
            mk(AggFunc::Avg, "a"),
            mk(AggFunc::Count, "c"),
            mk(AggFunc::CountStar, "n"),
            mk(AggFunc::Min, "lo"),
            mk(AggFunc::Max, "hi"),
        ]
    }

    fn ctx() -> OpContext {
        OpContext {
            memory_budget: 1 << 30,
            batch_rows: 1024,
        }
    }

    fn run(mode: AggMode, keys: bool, schema: &Schema, batches: Vec<RecordBatch>) -> RecordBatch {
        let group_by = if keys {
            let dt = schema.field("g").unwrap().data_type;
            vec![(BoundExpr::column("g", dt), "g".to_string())]
        } else {
            vec![]
        };
        let op = PhysicalOp::HashAggregate {
            mode,
            group_by: group_by.clone(),
            aggregates: aggs(),
        };
        let out_schema = Arc::new(op.output_schema(schema));
        let mut agg = HashAggregate::new(mode, &group_by, &aggs(), out_schema.clone(), ctx()).unwrap();
        for b in batches {
            agg.push(b, &mut vec![]).unwrap();
        }
        let mut out = vec![];
        agg.finish(&mut out).unwrap();
        RecordBatch::concat(out_schema, &out)
    }

    /// Partial over each split, then final over the union of partials.
    fn two_phase(keys: bool, parts: Vec<RecordBatch>) -> RecordBatch {
        let schema = parts[0].schema.clone();
        let partials: Vec<RecordBatch> = parts.into_iter().map(|p| run(AggMode::Partial, keys, &schema, vec![p])).collect();
        let pschema = partials[0].schema.clone();
        run(AggMode::Final, keys, &pschema, partials)
    }

    #[test]
    fn count_over_split_adds_up() {
        let a = input(&[("a", Some(1)); 3]);
        let b = input(&[("a", Some(1)); 4]);
        let r = two_phase(false, vec![a, b]);
        assert_eq!(r.column_by_name("n").unwrap().value(0), S::Int64(7));
        assert_eq!(r.column_by_name("s").unwrap().value(0), dec(7));
    }

    #[test]
    fn empty_input_gives_one_null_row_without_keys() {
        let r = two_phase(false, vec![input(&[])]);
        assert_eq!(r.num_rows(), 1);
        assert_eq!(r.row(0), vec![S::Null, S::Null, S::Int64(0), S::Int64(0), S::Null, S::Null]);
        let r = two_phase(true, vec![input(&[])]);
        assert_eq!(r.num_rows(), 0);
    }

    #[test]
    fn avg_rounds_half_even_at_scale_six() {
        assert_eq!(exact_avg(1, 8, 0).unwrap(), S::Decimal { value: 125_000, scale: 6 });
        // 0.0000005 rounds to even (0), 0.0000015 to 0.000002.
        assert_eq!(exact_avg(5, 1, 7).unwrap(), S::Decimal { value: 0, scale: 6 });
        assert_eq!(exact_avg(15, 1, 7).unwrap(), S::Decimal { value: 2, scale: 6 });
        assert_eq!(exact_avg(2, 3, 2).unwrap(), S::Decimal { value: 6_667, scale: 6 });
        assert_eq!(exact_avg(0, 0, 2).unwrap(), S::Null);
    }

    #[test]
    fn nulls_are_skipped_but_counted_by_count_star() {
        let r = two_phase(true, vec![input(&[("a", None), ("a", Some(250)), ("b", None)])]);
        assert_eq!(r.row(0), vec![S::Utf8("a".into()), dec(250), S::Decimal { value: 2_500_000, scale: 6 }, S::Int64(1), S::Int64(2), dec(250), dec(250)]);
        assert_eq!(r.row(1), vec![S::Utf8("b".into()), S::Null, S::Null, S::Int64(0), S::Int64(1), S::Null, S::Null]);
    }

    fn sorted_rows(b: &RecordBatch) -> Vec<Vec<S>> {
        let mut rows: Vec<Vec<S>> = (0..b.num_rows()).map(|i| b.row(i)).collect();
        rows.sort();
        rows
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        /// Any split of the input into partials gives the single-pass result.
        #[test]
        fn partial_final_additivity(
            rows in proptest::collection::vec((0u8..4, proptest::option::weighted(0.9, -100_000i64..100_000)), 0..60),
            cuts in proptest::collection::vec(0usize..60, 0..4),
        ) {
            let names = ["w", "x", "y", "z"];
            let rows: Vec<(&str, Option<i64>)> = rows.iter().map(|(g, x)| (names[*g as usize], *x)).collect();
            let mut cuts: Vec<usize> = cuts.into_iter().map(|c| c.min(rows.len())).collect();
            cuts.push(0);
            cuts.push(rows.len());
            cuts.sort_unstable();
            let parts: Vec<RecordBatch> = cuts.windows(2).map(|w| input(&rows[w[0]..w[1]])).collect();
            let whole = input(&rows);
            let single = run(AggMode::Final, true, &{
                let p = run(AggMode::Partial, true, &whole.schema, vec![whole.clone()]);
                (*p.schema).clone()
            }, vec![run(AggMode::Partial, true, &whole.schema, vec![whole.clone()])]);
            let split = two_phase(true, parts);
            prop_assert_eq!(sorted_rows(&single), sorted_rows(&split));
            let split = two_phase(false, cuts.windows(2).map(|w| input(&rows[w[0]..w[1]])).collect());
            let single = two_phase(false, vec![whole]);
            prop_assert_eq!(single.row(0), split.row(0));
        }
    }
}
