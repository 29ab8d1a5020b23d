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

//! Single-threaded reference executor. It interprets the bound logical
//! plan row by row with its own scalar evaluator and shares nothing with
//! the worker operators.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use thiserror::Error;

use crate::sim::Simulator;
use crate::sql::expr::AVG_SCALE;
use crate::sql::{compile, AggFunc, AggregateExpr, BinaryOp, BoundExpr, LogicalPlan, SqlError};
use crate::storage::types::{compare_values, div_round_half_even, parse_date, pow10, rescale, DECIMAL_MAX};
use crate::storage::{read_file, Catalog, DataType, RecordBatch, ScalarValue, Schema};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error(transparent)]
    Compile(#[from] SqlError),
    #[error("evaluation: {0}")]
    Eval(String),
    #[error("data: {0}")]
    Data(String),
}

type Row = Vec<ScalarValue>;

/// Oracle output: column names and types plus rows.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub schema: Schema,
    pub rows: Vec<Row>,
    /// Whether row order is defined by an ORDER BY.
    pub ordered: bool,
}

pub fn run_oracle(sim: &Simulator, catalog: &Catalog, sql: &str) -> Result<OracleResult, OracleError> {
    let plan = compile(sql, catalog)?;
    let rows = Oracle { sim, catalog }.run(&plan)?;
    Ok(OracleResult {
        schema: plan.schema(),
        rows,
        ordered: is_ordered(&plan),
    })
}

fn is_ordered(plan: &LogicalPlan) -> bool {
    match plan {
        LogicalPlan::Sort { .. } => true,
        LogicalPlan::Project { input, .. } | LogicalPlan::Limit { input, .. } => is_ordered(input),
        _ => false,
    }
}

struct Oracle<'a> {
    sim: &'a Simulator,
    catalog: &'a Catalog,
}

fn err(msg: impl Into<String>) -> OracleError {
    OracleError::Eval(msg.into())
}

fn lookup<'r>(schema: &Schema, row: &'r Row, name: &str) -> Result<&'r ScalarValue, OracleError> {
    schema
        .fields
        .iter()
        .position(|f| f.name == name)
        .map(|i| &row[i])
        .ok_or_else(|| err(format!("no column {name}")))
}

fn exact(v: &ScalarValue) -> Option<(i128, u8)> {
    match v {
        ScalarValue::Int64(x) => Some((*x as i128, 0)),
        ScalarValue::Decimal { value, scale } => Some((*value as i128, *scale)),
        _ => None,
    }
}

fn float(v: &ScalarValue) -> Option<f64> {
    match v {
        ScalarValue::Float64(x) => Some(*x),
        other => exact(other).map(|(x, s)| x as f64 / pow10(s) as f64),
    }
}

fn dec(v: i128, scale: u8) -> Result<ScalarValue, OracleError> {
    if v.abs() > DECIMAL_MAX {
        return Err(err("decimal overflow"));
    }
    Ok(ScalarValue::Decimal { value: v as i64, scale })
}

fn arith(op: BinaryOp, l: &ScalarValue, r: &ScalarValue, dt: DataType) -> Result<ScalarValue, OracleError> {
    if l.is_null() || r.is_null() {
        return Ok(ScalarValue::Null);
    }
    match dt {
        DataType::Float64 => {
            let (x, y) = (float(l).ok_or_else(|| err("non-numeric"))?, float(r).ok_or_else(|| err("non-numeric"))?);
            Ok(match op {
                BinaryOp::Plus => ScalarValue::Float64(x + y),
                BinaryOp::Minus => ScalarValue::Float64(x - y),
                BinaryOp::Multiply => ScalarValue::Float64(x * y),
                BinaryOp::Divide if y == 0.0 => ScalarValue::Null,
                BinaryOp::Divide => ScalarValue::Float64(x / y),
                _ => return Err(err("not arithmetic")),
            })
        }
        DataType::Int64 => {
            let (ScalarValue::Int64(x), ScalarValue::Int64(y)) = (l, r) else {
                return Err(err("integer arithmetic on non-integers"));
            };
            let v = match op {
                BinaryOp::Plus => x.checked_add(*y),
                BinaryOp::Minus => x.checked_sub(*y),
                BinaryOp::Multiply => x.checked_mul(*y),
                _ => return Err(err("integer division")),
            };
            v.map(ScalarValue::Int64).ok_or_else(|| err("integer overflow"))
        }
        DataType::Decimal { scale, .. } => {
            let (x, sx) = exact(l).ok_or_else(|| err("non-exact operand"))?;
            let (y, sy) = exact(r).ok_or_else(|| err("non-exact operand"))?;
            let v = match op {
                BinaryOp::Plus => rescale(x, sx, scale) + rescale(y, sy, scale),
                BinaryOp::Minus => rescale(x, sx, scale) - rescale(y, sy, scale),
                BinaryOp::Multiply => rescale(x * y, sx + sy, scale),
                BinaryOp::Divide => {
                    if y == 0 {
                        return Ok(ScalarValue::Null);
                    }
                    let num = x.checked_mul(pow10(scale + sy)).ok_or_else(|| err("decimal overflow"))?;
                    div_round_half_even(num, y * pow10(sx))
                }
                _ => return Err(err("not arithmetic")),
            };
            dec(v, scale)
        }
        other => Err(err(format!("arithmetic producing {other}"))),
    }
}

fn truth(v: &ScalarValue) -> Option<bool> {
    match v {
        ScalarValue::Bool(b) => Some(*b),
        _ => None,
    }
}

fn tri(v: Option<bool>) -> ScalarValue {
    v.map_or(ScalarValue::Null, ScalarValue::Bool)
}

fn cast(v: ScalarValue, to: DataType) -> Result<ScalarValue, OracleError> {
    if v.is_null() {
        return Ok(v);
    }
    match (&v, to) {
        (ScalarValue::Int64(_) | ScalarValue::Decimal { .. }, DataType::Decimal { scale, .. }) => {
            let (x, s) = exact(&v).expect("exact");
            dec(rescale(x, s, scale), scale)
        }
        (ScalarValue::Decimal { value, scale }, DataType::Int64) => {
            Ok(ScalarValue::Int64(rescale(*value as i128, *scale, 0) as i64))
        }
        (ScalarValue::Int64(_) | ScalarValue::Decimal { .. }, DataType::Float64) => {
            Ok(ScalarValue::Float64(float(&v).expect("numeric")))
        }
        (ScalarValue::Float64(x), DataType::Decimal { scale, .. }) => {
            let r = (x * pow10(scale) as f64).round();
            if !r.is_finite() || r.abs() > DECIMAL_MAX as f64 {
                return Err(err("decimal overflow"));
            }
            Ok(ScalarValue::Decimal { value: r as i64, scale })
        }
        (ScalarValue::Utf8(s), DataType::Date) => {
            parse_date(s).map(ScalarValue::Date).ok_or_else(|| err(format!("not a date: {s}")))
        }
        _ => v.cast(to).map_err(|e| err(e.to_string())),
    }
}

fn eval(e: &BoundExpr, schema: &Schema, row: &Row) -> Result<ScalarValue, OracleError> {
    Ok(match e {
        BoundExpr::Column { name, .. } => lookup(schema, row, name)?.clone(),
        BoundExpr::Literal { value, .. } => value.clone(),
        BoundExpr::Cast { expr, data_type } => cast(eval(expr, schema, row)?, *data_type)?,
        BoundExpr::Negative(inner) => match eval(inner, schema, row)? {
            ScalarValue::Null => ScalarValue::Null,
            ScalarValue::Int64(x) => ScalarValue::Int64(x.checked_neg().ok_or_else(|| err("negation overflow"))?),
            ScalarValue::Float64(x) => ScalarValue::Float64(-x),
            ScalarValue::Decimal { value, scale } => ScalarValue::Decimal { value: -value, scale },
            other => return Err(err(format!("negation of {other:?}"))),
        },
        BoundExpr::Not(inner) => tri(truth(&eval(inner, schema, row)?).map(|b| !b)),
        BoundExpr::IsNull { expr, negated } => ScalarValue::Bool(eval(expr, schema, row)?.is_null() != *negated),
        BoundExpr::InList { expr, list, negated } => {
            let v = eval(expr, schema, row)?;
            if v.is_null() {
                ScalarValue::Null
            } else if list.iter().any(|x| !x.is_null() && compare_values(&v, x) == Ordering::Equal) {
                ScalarValue::Bool(!negated)
            } else if list.iter().any(|x| x.is_null()) {
                ScalarValue::Null
            } else {
                ScalarValue::Bool(*negated)
            }
        }
        BoundExpr::Case { whens, else_expr, .. } => {
            for (w, t) in whens {
                if truth(&eval(w, schema, row)?) == Some(true) {
                    return eval(t, schema, row);
                }
            }
            match else_expr {
                Some(x) => eval(x, schema, row)?,
                None => ScalarValue::Null,
            }
        }
        BoundExpr::Binary {
            op,
            left,
            right,
            data_type,
        } => {
            let l = eval(left, schema, row)?;
            match op {
                BinaryOp::And | BinaryOp::Or => {
                    let r = eval(right, schema, row)?;
                    let (a, b) = (truth(&l), truth(&r));
                    tri(match op {
                        BinaryOp::And if a == Some(false) || b == Some(false) => Some(false),
                        BinaryOp::And => a.and(b),
                        _ if a == Some(true) || b == Some(true) => Some(true),
                        _ => a.and(b),
                    })
                }
                op if op.is_comparison() => {
                    let r = eval(right, schema, row)?;
                    if l.is_null() || r.is_null() {
                        ScalarValue::Null
                    } else {
                        let o = compare_values(&l, &r);
                        ScalarValue::Bool(match op {
                            BinaryOp::Eq => o == Ordering::Equal,
                            BinaryOp::NotEq => o != Ordering::Equal,
                            BinaryOp::Lt => o == Ordering::Less,
                            BinaryOp::LtEq => o != Ordering::Greater,
                            BinaryOp::Gt => o == Ordering::Greater,
                            _ => o != Ordering::Less,
                        })
                    }
                }
                op => arith(*op, &l, &eval(right, schema, row)?, *data_type)?,
            }
        }
    })
}

fn concat(a: &Schema, b: &Schema) -> Schema {
    Schema::new(a.fields.iter().chain(&b.fields).cloned().collect())
}

/// Running state of one aggregate.
#[derive(Debug, Clone)]
enum Acc {
    Count(i64),
    SumExact(Option<i128>, u8),
    SumFloat(Option<f64>),
    AvgExact(i128, i64, u8),
    AvgFloat(f64, i64),
    Best(Option<ScalarValue>, Ordering),
}

impl Acc {
    fn new(a: &AggregateExpr) -> Self {
        let arg_scale = match a.arg.as_ref().map(|e| e.data_type()) {
            Some(DataType::Decimal { scale, .. }) => scale,
            _ => 0,
        };
        let float_arg = matches!(a.arg.as_ref().map(|e| e.data_type()), Some(DataType::Float64));
        match a.func {
            AggFunc::Count | AggFunc::CountStar => Acc::Count(0),
            AggFunc::Sum if float_arg => Acc::SumFloat(None),
            AggFunc::Sum => Acc::SumExact(None, arg_scale),
            AggFunc::Avg if float_arg => Acc::AvgFloat(0.0, 0),
            AggFunc::Avg => Acc::AvgExact(0, 0, arg_scale),
            AggFunc::Min => Acc::Best(None, Ordering::Less),
            AggFunc::Max => Acc::Best(None, Ordering::Greater),
        }
    }

    fn add(&mut self, v: Option<ScalarValue>) -> Result<(), OracleError> {
        let Some(v) = v else {
            // count(*)
            if let Acc::Count(n) = self {
                *n += 1;
            }
            return Ok(());
        };
        if v.is_null() {
            return Ok(());
        }
        match self {
            Acc::Count(n) => *n += 1,
            Acc::SumExact(s, _) => *s = Some(s.unwrap_or(0) + exact(&v).ok_or_else(|| err("sum of non-exact"))?.0),
            Acc::SumFloat(s) => *s = Some(s.unwrap_or(0.0) + float(&v).ok_or_else(|| err("sum of non-numeric"))?),
            Acc::AvgExact(s, n, _) => {
                *s += exact(&v).ok_or_else(|| err("avg of non-exact"))?.0;
                *n += 1;
            }
            Acc::AvgFloat(s, n) => {
                *s += float(&v).ok_or_else(|| err("avg of non-numeric"))?;
                *n += 1;
            }
            Acc::Best(b, want) => {
                if b.as_ref().map_or(true, |cur| compare_values(&v, cur) == *want) {
                    *b = Some(v);
                }
            }
        }
        Ok(())
    }

    fn result(&self, dt: DataType) -> Result<ScalarValue, OracleError> {
        Ok(match self {
            Acc::Count(n) => ScalarValue::Int64(*n),
            Acc::SumExact(None, _) | Acc::SumFloat(None) => ScalarValue::Null,
            Acc::SumExact(Some(s), scale) => match dt {
                DataType::Int64 => ScalarValue::Int64(i64::try_from(*s).map_err(|_| err("sum overflow"))?),
                _ => dec(*s, *scale)?,
            },
            Acc::SumFloat(Some(s)) => ScalarValue::Float64(*s),
            Acc::AvgExact(_, 0, _) | Acc::AvgFloat(_, 0) => ScalarValue::Null,
            Acc::AvgExact(s, n, scale) => dec(
                div_round_half_even(s * pow10(AVG_SCALE), *n as i128 * pow10(*scale)),
                AVG_SCALE,
            )?,
            Acc::AvgFloat(s, n) => ScalarValue::Float64(s / *n as f64),
            Acc::Best(b, _) => b.clone().unwrap_or(ScalarValue::Null),
        })
    }
}

impl Oracle<'_> {
    fn run(&self, plan: &LogicalPlan) -> Result<Vec<Row>, OracleError> {
        match plan {
            LogicalPlan::Scan { table, columns, .. } => self.scan(table, columns),
            LogicalPlan::Values { rows, .. } => Ok(rows.clone()),
            LogicalPlan::Filter { input, predicate } => {
                if let LogicalPlan::Join { left, right, on, .. } = input.as_ref() {
                    let mut conds = predicate.conjuncts();
                    conds.extend(on.iter().flat_map(|o| o.conjuncts()));
                    return self.join(left, right, &conds);
                }
                let schema = input.schema();
                let rows = self.run(input)?;
                let mut out = vec![];
                for r in rows {
                    if truth(&eval(predicate, &schema, &r)?) == Some(true) {
                        out.push(r);
                    }
                }
                Ok(out)
            }
            LogicalPlan::Join { left, right, on, .. } => {
                let conds = on.iter().flat_map(|o| o.conjuncts()).collect::<Vec<_>>();
                self.join(left, right, &conds)
            }
            LogicalPlan::Project { input, exprs } => {
                let schema = input.schema();
                self.run(input)?
                    .iter()
                    .map(|r| exprs.iter().map(|(e, _)| eval(e, &schema, r)).collect())
                    .collect()
            }
            LogicalPlan::Aggregate {
                input,
                group_by,
                aggregates,
            } => self.aggregate(input, group_by, aggregates),
            LogicalPlan::Sort { input, keys } => {
                let schema = input.schema();
                let rows = self.run(input)?;
                let mut keyed = rows
                    .into_iter()
                    .map(|r| Ok((keys.iter().map(|k| eval(&k.expr, &schema, &r)).collect::<Result<Vec<_>, _>>()?, r)))
                    .collect::<Result<Vec<_>, OracleError>>()?;
                // Stable: equal keys keep input order.
                keyed.sort_by(|(a, _), (b, _)| {
                    for ((x, y), k) in a.iter().zip(b).zip(keys) {
                        let o = compare_values(x, y);
                        let o = if k.asc { o } else { o.reverse() };
                        if o != Ordering::Equal {
                            return o;
                        }
                    }
                    Ordering::Equal
                });
                Ok(keyed.into_iter().map(|(_, r)| r).collect())
            }
            LogicalPlan::Limit { input, n } => {
                let mut rows = self.run(input)?;
                rows.truncate(*n as usize);
                Ok(rows)
            }
        }
    }

    fn scan(&self, table: &str, columns: &[String]) -> Result<Vec<Row>, OracleError> {
        let (_, manifest) = self.catalog.resolve(table).map_err(|e| OracleError::Data(e.to_string()))?;
        let mut out = vec![];
        for o in &manifest.objects {
            let obj = self
                .sim
                .peek_object(&o.bucket, &o.key)
                .ok_or_else(|| OracleError::Data(format!("missing {}", o.key)))?;
            let (_, batches) = read_file(&obj.bytes).map_err(|e| OracleError::Data(e.to_string()))?;
            for b in batches {
                let idx = columns
                    .iter()
                    .map(|c| b.schema.index_of(c).ok_or_else(|| OracleError::Data(format!("no column {c}"))))
                    .collect::<Result<Vec<_>, _>>()?;
                for i in 0..b.num_rows() {
                    out.push(idx.iter().map(|&j| b.columns[j].value(i)).collect());
                }
            }
        }
        Ok(out)
    }

    /// Inner join under a conjunction: single-side conjuncts filter inputs,
    /// column equalities across sides become hash keys, the rest is checked
    /// per candidate pair.
    fn join(&self, left: &LogicalPlan, right: &LogicalPlan, conds: &[BoundExpr]) -> Result<Vec<Row>, OracleError> {
        let (ls, rs) = (left.schema(), right.schema());
        let has = |s: &Schema, e: &BoundExpr| e.columns().iter().all(|c| s.index_of(c).is_some());
        let (mut lf, mut rf, mut keys, mut rest) = (vec![], vec![], vec![], vec![]);
        for c in conds {
            match c {
                _ if has(&ls, c) => lf.push(c),
                _ if has(&rs, c) => rf.push(c),
                BoundExpr::Binary {
                    op: BinaryOp::Eq,
                    left: a,
                    right: b,
                    ..
                } if has(&ls, a) && has(&rs, b) => keys.push((a.as_ref(), b.as_ref())),
                BoundExpr::Binary {
                    op: BinaryOp::Eq,
                    left: a,
                    right: b,
                    ..
                } if has(&rs, a) && has(&ls, b) => keys.push((b.as_ref(), a.as_ref())),
                _ => rest.push(c),
            }
        }
        let keep = |schema: &Schema, rows: Vec<Row>, fs: &[&BoundExpr]| -> Result<Vec<Row>, OracleError> {
            let mut out = vec![];
            'rows: for r in rows {
                for f in fs {
                    if truth(&eval(f, schema, &r)?) != Some(true) {
                        continue 'rows;
                    }
                }
                out.push(r);
            }
            Ok(out)
        };
        let lrows = keep(&ls, self.run(left)?, &lf)?;
        let rrows = keep(&rs, self.run(right)?, &rf)?;
        let schema = concat(&ls, &rs);
        let mut table: BTreeMap<Vec<ScalarValue>, Vec<usize>> = BTreeMap::new();
        for (i, r) in rrows.iter().enumerate() {
            let k = keys.iter().map(|(_, b)| eval(b, &rs, r)).collect::<Result<Vec<_>, _>>()?;
            if k.iter().any(|v| v.is_null()) {
                continue;
            }
            table.entry(k).or_default().push(i);
        }
        let mut out = vec![];
        for l in &lrows {
            let k = keys.iter().map(|(a, _)| eval(a, &ls, l)).collect::<Result<Vec<_>, _>>()?;
            if k.iter().any(|v| v.is_null()) {
                continue;
            }
            for &j in table.get(&k).map(Vec::as_slice).unwrap_or(&[]) {
                let row: Row = l.iter().chain(&rrows[j]).cloned().collect();
                let mut ok = true;
                for c in &rest {
                    if truth(&eval(c, &schema, &row)?) != Some(true) {
                        ok = false;
                        break;
                    }
                }
                if ok {
                    out.push(row);
                }
            }
        }
        Ok(out)
    }

    fn aggregate(
        &self,
        input: &LogicalPlan,
        group_by: &[(BoundExpr, String)],
        aggregates: &[AggregateExpr],
    ) -> Result<Vec<Row>, OracleError> {
        let schema = input.schema();
        let mut groups: BTreeMap<Vec<ScalarValue>, Vec<Acc>> = BTreeMap::new();
        let mut order: Vec<Vec<ScalarValue>> = vec![];
        if group_by.is_empty() {
            groups.insert(vec![], aggregates.iter().map(Acc::new).collect());
            order.push(vec![]);
        }
        for r in self.run(input)? {
            let k = group_by.iter().map(|(e, _)| eval(e, &schema, &r)).collect::<Result<Vec<_>, _>>()?;
            let accs = groups.entry(k.clone()).or_insert_with(|| {
                order.push(k);
                aggregates.iter().map(Acc::new).collect()
            });
            for (acc, a) in accs.iter_mut().zip(aggregates) {
                let v = a.arg.as_ref().map(|e| eval(e, &schema, &r)).transpose()?;
                acc.add(v)?;
            }
        }
        order
            .into_iter()
            .map(|k| {
                let accs = &groups[&k];
                let mut row = k;
                for (acc, a) in accs.iter().zip(aggregates) {
                    row.push(acc.result(a.data_type)?);
                }
                Ok(row)
            })
            .collect()
    }
}

/// Strict value equality: same variant and, for decimals, same scale.
/// Floats match within `rel_tol` relative error.
pub fn values_match(a: &ScalarValue, b: &ScalarValue, rel_tol: f64) -> bool {
    match (a, b) {
        (ScalarValue::Float64(x), ScalarValue::Float64(y)) => {
            x == y || (x - y).abs() <= rel_tol * x.abs().max(y.abs())
        }
        (ScalarValue::Decimal { value: x, scale: s }, ScalarValue::Decimal { value: y, scale: t }) => x == y && s == t,
        _ => std::mem::discriminant(a) == std::mem::discriminant(b) && compare_values(a, b) == Ordering::Equal,
    }
}

/// Rows of a batch list.
pub fn batches_to_rows(batches: &[RecordBatch]) -> Vec<Row> {
    batches.iter().flat_map(|b| (0..b.num_rows()).map(move |i| b.row(i))).collect()
}

/// Compares `actual` with the oracle result; unordered results are compared
/// as multisets. Returns a description of the first difference.
pub fn compare_with_oracle(expected: &OracleResult, actual: &[RecordBatch], rel_tol: f64) -> Result<(), String> {
    let mut exp = expected.rows.clone();
    let mut act = batches_to_rows(actual);
    if exp.len() != act.len() {
        return Err(format!("row count {} != expected {}", act.len(), exp.len()));
    }
    if !expected.ordered {
        exp.sort();
        act.sort();
    }
    for (i, (e, a)) in exp.iter().zip(&act).enumerate() {
        if e.len() != a.len() || !e.iter().zip(a).all(|(x, y)| values_match(x, y, rel_tol)) {
            return Err(format!("row {i}: got {a:?}, expected {e:?}"));
        }
    }
    Ok(())
}
