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

//! Vectorized evaluation of bound expressions over record batches.
//!
//! Null semantics follow SQL: arithmetic and comparisons propagate NULL,
//! AND/OR use three-valued logic, and division by zero yields NULL.

use std::borrow::Cow;

use thiserror::Error;

use crate::sql::expr::AVG_SCALE;
use crate::sql::{BinaryOp, BoundExpr};
use crate::storage::types::{div_round_half_even, parse_date, pow10, rescale, DECIMAL_MAX};
use crate::storage::{Column, ColumnBuilder, ColumnData, DataType, RecordBatch, ScalarValue, Schema};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("numeric overflow in {0}")]
    Overflow(String),
    #[error("column {0} not present in input")]
    MissingColumn(String),
    #[error("unexpected operand type: {0}")]
    Type(String),
}

/// An evaluated operand: a column of the batch's length or a constant.
#[derive(Debug, Clone)]
pub enum Datum<'a> {
    Array(Cow<'a, Column>),
    Scalar(ScalarValue),
}

impl Datum<'_> {
    fn is_scalar(&self) -> bool {
        matches!(self, Datum::Scalar(_))
    }

    pub fn into_column(self, dt: DataType, rows: usize) -> Result<Column, EvalError> {
        match self {
            Datum::Array(c) => Ok(c.into_owned()),
            Datum::Scalar(v) => broadcast(&v, dt, rows),
        }
    }
}

fn broadcast(v: &ScalarValue, dt: DataType, rows: usize) -> Result<Column, EvalError> {
    if v.is_null() {
        return Ok(Column::null(dt, rows));
    }
    let data = match (v, dt) {
        (ScalarValue::Int64(x), DataType::Int64) => ColumnData::Int64(vec![*x; rows]),
        (ScalarValue::Decimal { value, .. }, DataType::Decimal { .. }) => ColumnData::Decimal(vec![*value; rows]),
        (ScalarValue::Float64(x), DataType::Float64) => ColumnData::Float64(vec![*x; rows]),
        (ScalarValue::Utf8(s), DataType::Utf8) => ColumnData::Utf8(vec![s.clone(); rows]),
        (ScalarValue::Date(d), DataType::Date) => ColumnData::Date(vec![*d; rows]),
        (ScalarValue::Bool(b), DataType::Bool) => ColumnData::Bool(vec![*b; rows]),
        _ => {
            let cast = v.cast(dt).map_err(|e| EvalError::Type(e.to_string()))?;
            return broadcast(&cast, dt, rows);
        }
    };
    Ok(Column::new(dt, data, None))
}

/// Typed element access over a column slice or a constant.
#[derive(Clone, Copy)]
enum Src<'a, T: Copy> {
    Slice(&'a [T], Option<&'a [bool]>),
    Const(Option<T>),
}

impl<T: Copy> Src<'_, T> {
    #[inline]
    fn get(&self, i: usize) -> Option<T> {
        match self {
            Src::Slice(v, None) => Some(v[i]),
            Src::Slice(v, Some(m)) => m[i].then(|| v[i]),
            Src::Const(c) => *c,
        }
    }
}

fn type_err(what: &str, d: &Datum) -> EvalError {
    let t = match d {
        Datum::Array(c) => c.data_type.to_string(),
        Datum::Scalar(v) => format!("{v:?}"),
    };
    EvalError::Type(format!("{what} over {t}"))
}

fn i64_src<'a>(d: &'a Datum) -> Result<Src<'a, i64>, EvalError> {
    match d {
        Datum::Array(c) => match &c.data {
            ColumnData::Int64(v) | ColumnData::Decimal(v) => Ok(Src::Slice(v, c.validity.as_deref())),
            _ => Err(type_err("integer access", d)),
        },
        Datum::Scalar(ScalarValue::Null) => Ok(Src::Const(None)),
        Datum::Scalar(ScalarValue::Int64(x)) => Ok(Src::Const(Some(*x))),
        Datum::Scalar(ScalarValue::Decimal { value, .. }) => Ok(Src::Const(Some(*value))),
        _ => Err(type_err("integer access", d)),
    }
}

fn f64_src<'a>(d: &'a Datum) -> Result<Src<'a, f64>, EvalError> {
    match d {
        Datum::Array(c) => match &c.data {
            ColumnData::Float64(v) => Ok(Src::Slice(v, c.validity.as_deref())),
            _ => Err(type_err("float access", d)),
        },
        Datum::Scalar(ScalarValue::Null) => Ok(Src::Const(None)),
        Datum::Scalar(ScalarValue::Float64(x)) => Ok(Src::Const(Some(*x))),
        _ => Err(type_err("float access", d)),
    }
}

fn i32_src<'a>(d: &'a Datum) -> Result<Src<'a, i32>, EvalError> {
    match d {
        Datum::Array(c) => match &c.data {
            ColumnData::Date(v) => Ok(Src::Slice(v, c.validity.as_deref())),
            _ => Err(type_err("date access", d)),
        },
        Datum::Scalar(ScalarValue::Null) => Ok(Src::Const(None)),
        Datum::Scalar(ScalarValue::Date(x)) => Ok(Src::Const(Some(*x))),
        _ => Err(type_err("date access", d)),
    }
}

fn bool_src<'a>(d: &'a Datum) -> Result<Src<'a, bool>, EvalError> {
    match d {
        Datum::Array(c) => match &c.data {
            ColumnData::Bool(v) => Ok(Src::Slice(v, c.validity.as_deref())),
            _ => Err(type_err("boolean access", d)),
        },
        Datum::Scalar(ScalarValue::Null) => Ok(Src::Const(None)),
        Datum::Scalar(ScalarValue::Bool(x)) => Ok(Src::Const(Some(*x))),
        _ => Err(type_err("boolean access", d)),
    }
}

fn str_get<'a>(d: &'a Datum, i: usize) -> Result<Option<&'a str>, EvalError> {
    match d {
        Datum::Array(c) => match &c.data {
            ColumnData::Utf8(v) => Ok(c.is_valid(i).then(|| v[i].as_str())),
            _ => Err(type_err("string access", d)),
        },
        Datum::Scalar(ScalarValue::Null) => Ok(None),
        Datum::Scalar(ScalarValue::Utf8(s)) => Ok(Some(s.as_str())),
        _ => Err(type_err("string access", d)),
    }
}

fn build<T>(
    n: usize,
    dt: DataType,
    wrap: impl FnOnce(Vec<T>) -> ColumnData,
    mut f: impl FnMut(usize) -> Result<Option<T>, EvalError>,
) -> Result<Column, EvalError>
where
    T: Default,
{
    let mut values = Vec::with_capacity(n);
    let mut validity = Vec::with_capacity(n);
    let mut any_null = false;
    for i in 0..n {
        match f(i)? {
            Some(v) => {
                values.push(v);
                validity.push(true);
            }
            None => {
                values.push(T::default());
                validity.push(false);
                any_null = true;
            }
        }
    }
    Ok(Column::new(dt, wrap(values), any_null.then_some(validity)))
}

fn bool_column(n: usize, f: impl FnMut(usize) -> Result<Option<bool>, EvalError>) -> Result<Column, EvalError> {
    build(n, DataType::Bool, ColumnData::Bool, f)
}

fn check_dec(v: i128, what: &str) -> Result<i64, EvalError> {
    if (-DECIMAL_MAX..=DECIMAL_MAX).contains(&v) {
        Ok(v as i64)
    } else {
        Err(EvalError::Overflow(what.into()))
    }
}

fn arithmetic(
    op: BinaryOp,
    l: &Datum,
    r: &Datum,
    (lt, rt): (DataType, DataType),
    dt: DataType,
    n: usize,
) -> Result<Column, EvalError> {
    let what = op.symbol();
    match dt {
        DataType::Float64 => {
            let (a, b) = (f64_src(l)?, f64_src(r)?);
            build(n, dt, ColumnData::Float64, |i| {
                Ok(match (a.get(i), b.get(i)) {
                    (Some(x), Some(y)) => match op {
                        BinaryOp::Plus => Some(x + y),
                        BinaryOp::Minus => Some(x - y),
                        BinaryOp::Multiply => Some(x * y),
                        BinaryOp::Divide => (y != 0.0).then(|| x / y),
                        _ => unreachable!("arithmetic operator"),
                    },
                    _ => None,
                })
            })
        }
        DataType::Int64 => {
            let (a, b) = (i64_src(l)?, i64_src(r)?);
            build(n, dt, ColumnData::Int64, |i| match (a.get(i), b.get(i)) {
                (Some(x), Some(y)) => match op {
                    BinaryOp::Plus => x.checked_add(y),
                    BinaryOp::Minus => x.checked_sub(y),
                    BinaryOp::Multiply => x.checked_mul(y),
                    _ => unreachable!("integer division is typed as decimal"),
                }
                .map(Some)
                .ok_or_else(|| EvalError::Overflow(what.into())),
                _ => Ok(None),
            })
        }
        DataType::Decimal { scale, .. } => {
            let (a, b) = (i64_src(l)?, i64_src(r)?);
            let (s1, s2) = (lt.scale(), rt.scale());
            match op {
                BinaryOp::Plus | BinaryOp::Minus | BinaryOp::Multiply => {
                    build(n, dt, ColumnData::Decimal, |i| match (a.get(i), b.get(i)) {
                        (Some(x), Some(y)) => {
                            let (x, y) = (x as i128, y as i128);
                            let v = match op {
                                BinaryOp::Plus => x + y,
                                BinaryOp::Minus => x - y,
                                _ => x * y,
                            };
                            check_dec(v, what).map(Some)
                        }
                        _ => Ok(None),
                    })
                }
                BinaryOp::Divide => {
                    debug_assert_eq!(scale, AVG_SCALE);
                    // x/10^s1 / (y/10^s2) at scale 6 = x*10^(6+s2) / (y*10^s1).
                    let num_scale = pow10(AVG_SCALE + s2);
                    let den_scale = pow10(s1);
                    build(n, dt, ColumnData::Decimal, |i| match (a.get(i), b.get(i)) {
                        (Some(_), Some(0)) => Ok(None),
                        (Some(x), Some(y)) => {
                            let num = (x as i128)
                                .checked_mul(num_scale)
                                .ok_or_else(|| EvalError::Overflow(what.into()))?;
                            let den = (y as i128) * den_scale;
                            check_dec(div_round_half_even(num, den), what).map(Some)
                        }
                        _ => Ok(None),
                    })
                }
                _ => unreachable!("arithmetic operator"),
            }
        }
        other => Err(EvalError::Type(format!("arithmetic producing {other}"))),
    }
}

fn cmp_result(op: BinaryOp, o: std::cmp::Ordering) -> bool {
    use std::cmp::Ordering::*;
    match op {
        BinaryOp::Eq => o == Equal,
        BinaryOp::NotEq => o != Equal,
        BinaryOp::Lt => o == Less,
        BinaryOp::LtEq => o != Greater,
        BinaryOp::Gt => o == Greater,
        BinaryOp::GtEq => o != Less,
        _ => unreachable!("comparison operator"),
    }
}

fn compare(op: BinaryOp, l: &Datum, r: &Datum, t: DataType, n: usize) -> Result<Column, EvalError> {
    match t {
        DataType::Int64 | DataType::Decimal { .. } => {
            let (a, b) = (i64_src(l)?, i64_src(r)?);
            bool_column(n, |i| Ok(a.get(i).zip(b.get(i)).map(|(x, y)| cmp_result(op, x.cmp(&y)))))
        }
        DataType::Float64 => {
            let (a, b) = (f64_src(l)?, f64_src(r)?);
            bool_column(n, |i| {
                Ok(a.get(i).zip(b.get(i)).map(|(x, y)| cmp_result(op, x.total_cmp(&y))))
            })
        }
        DataType::Date => {
            let (a, b) = (i32_src(l)?, i32_src(r)?);
            bool_column(n, |i| Ok(a.get(i).zip(b.get(i)).map(|(x, y)| cmp_result(op, x.cmp(&y)))))
        }
        DataType::Bool => {
            let (a, b) = (bool_src(l)?, bool_src(r)?);
            bool_column(n, |i| Ok(a.get(i).zip(b.get(i)).map(|(x, y)| cmp_result(op, x.cmp(&y)))))
        }
        DataType::Utf8 => bool_column(n, |i| {
            Ok(str_get(l, i)?
                .zip(str_get(r, i)?)
                .map(|(x, y)| cmp_result(op, x.cmp(y))))
        }),
    }
}

fn logical(op: BinaryOp, l: &Datum, r: &Datum, n: usize) -> Result<Column, EvalError> {
    let (a, b) = (bool_src(l)?, bool_src(r)?);
    bool_column(n, |i| {
        Ok(match (op, a.get(i), b.get(i)) {
            (BinaryOp::And, Some(false), _) | (BinaryOp::And, _, Some(false)) => Some(false),
            (BinaryOp::And, Some(true), Some(true)) => Some(true),
            (BinaryOp::Or, Some(true), _) | (BinaryOp::Or, _, Some(true)) => Some(true),
            (BinaryOp::Or, Some(false), Some(false)) => Some(false),
            _ => None,
        })
    })
}

fn cast(d: &Datum, from: DataType, to: DataType, n: usize) -> Result<Column, EvalError> {
    let overflow = || EvalError::Overflow(format!("cast to {to}"));
    match (from, to) {
        (DataType::Int64 | DataType::Decimal { .. }, DataType::Decimal { scale, .. }) => {
            let a = i64_src(d)?;
            let s = from.scale();
            build(n, to, ColumnData::Decimal, |i| {
                a.get(i)
                    .map(|x| check_dec(rescale(x as i128, s, scale), "cast").map_err(|_| overflow()))
                    .transpose()
            })
        }
        (DataType::Decimal { scale, .. }, DataType::Int64) => {
            let a = i64_src(d)?;
            build(n, to, ColumnData::Int64, |i| Ok(a.get(i).map(|x| rescale(x as i128, scale, 0) as i64)))
        }
        (DataType::Int64 | DataType::Decimal { .. }, DataType::Float64) => {
            let a = i64_src(d)?;
            let p = pow10(from.scale()) as f64;
            build(n, to, ColumnData::Float64, |i| Ok(a.get(i).map(|x| x as f64 / p)))
        }
        (DataType::Float64, DataType::Decimal { scale, .. }) => {
            let a = f64_src(d)?;
            let p = pow10(scale) as f64;
            build(n, to, ColumnData::Decimal, |i| {
                a.get(i)
                    .map(|x| {
                        let v = (x * p).round();
                        if v.is_finite() && v.abs() <= DECIMAL_MAX as f64 {
                            Ok(v as i64)
                        } else {
                            Err(overflow())
                        }
                    })
                    .transpose()
            })
        }
        (DataType::Utf8, DataType::Date) => build(n, to, ColumnData::Date, |i| {
            str_get(d, i)?
                .map(|s| parse_date(s).ok_or_else(|| EvalError::Type(format!("not a date: {s}"))))
                .transpose()
        }),
        (a, b) if a == b => d.clone().into_column(to, n),
        _ => {
            let col = d.clone().into_column(from, n)?;
            let mut out = ColumnBuilder::new(to, n);
            for i in 0..n {
                let v = col.value(i).cast(to).map_err(|e| EvalError::Type(e.to_string()))?;
                out.push(&v).map_err(|e| EvalError::Type(e.to_string()))?;
            }
            Ok(out.finish())
        }
    }
}

fn in_list(d: &Datum, dt: DataType, list: &[ScalarValue], negated: bool, n: usize) -> Result<Column, EvalError> {
    let list_has_null = list.iter().any(|v| v.is_null());
    let finish = move |found: Option<bool>| -> Option<bool> {
        match found {
            None => None,
            Some(true) => Some(!negated),
            Some(false) if list_has_null => None,
            Some(false) => Some(negated),
        }
    };
    match dt {
        DataType::Utf8 => {
            let items: Vec<&str> = list
                .iter()
                .filter_map(|v| match v {
                    ScalarValue::Utf8(s) => Some(s.as_str()),
                    _ => None,
                })
                .collect();
            bool_column(n, |i| Ok(finish(str_get(d, i)?.map(|s| items.contains(&s)))))
        }
        DataType::Int64 | DataType::Decimal { .. } => {
            let s = dt.scale();
            let items: Vec<i64> = list
                .iter()
                .filter_map(|v| v.as_decimal().map(|(x, vs)| rescale(x, vs, s) as i64))
                .collect();
            let a = i64_src(d)?;
            bool_column(n, |i| Ok(finish(a.get(i).map(|x| items.contains(&x)))))
        }
        DataType::Date => {
            let items: Vec<i32> = list
                .iter()
                .filter_map(|v| match v {
                    ScalarValue::Date(x) => Some(*x),
                    _ => None,
                })
                .collect();
            let a = i32_src(d)?;
            bool_column(n, |i| Ok(finish(a.get(i).map(|x| items.contains(&x)))))
        }
        _ => {
            let col = d.clone().into_column(dt, n)?;
            bool_column(n, |i| {
                let v = col.value(i);
                Ok(finish((!v.is_null()).then(|| list.iter().any(|x| !x.is_null() && *x == v))))
            })
        }
    }
}

/// Evaluates `e` over `batch`, returning a constant when `e` does not
/// depend on any column.
pub fn evaluate_datum<'a>(e: &BoundExpr, batch: &'a RecordBatch) -> Result<Datum<'a>, EvalError> {
    let rows = batch.num_rows();
    Ok(match e {
        BoundExpr::Column { name, .. } => {
            let i = batch
                .schema
                .index_of(name)
                .ok_or_else(|| EvalError::MissingColumn(name.clone()))?;
            Datum::Array(Cow::Borrowed(&batch.columns[i]))
        }
        BoundExpr::Literal { value, .. } => Datum::Scalar(value.clone()),
        _ => {
            let children: Vec<Datum> = e
                .children()
                .into_iter()
                .map(|c| evaluate_datum(c, batch))
                .collect::<Result<_, _>>()?;
            let all_scalar = children.iter().all(Datum::is_scalar);
            let n = if all_scalar { 1 } else { rows };
            let col = evaluate_node(e, &children, n)?;
            if all_scalar {
                Datum::Scalar(col.value(0))
            } else {
                Datum::Array(Cow::Owned(col))
            }
        }
    })
}

fn evaluate_node(e: &BoundExpr, ch: &[Datum], n: usize) -> Result<Column, EvalError> {
    match e {
        BoundExpr::Column { .. } | BoundExpr::Literal { .. } => unreachable!("leaves handled by caller"),
        BoundExpr::Cast { expr, data_type } => cast(&ch[0], expr.data_type(), *data_type, n),
        BoundExpr::Negative(inner) => match inner.data_type() {
            DataType::Float64 => {
                let a = f64_src(&ch[0])?;
                build(n, DataType::Float64, ColumnData::Float64, |i| Ok(a.get(i).map(|x| -x)))
            }
            dt @ DataType::Int64 => {
                let a = i64_src(&ch[0])?;
                build(n, dt, ColumnData::Int64, |i| {
                    a.get(i)
                        .map(|x| x.checked_neg().ok_or_else(|| EvalError::Overflow("negation".into())))
                        .transpose()
                })
            }
            dt @ DataType::Decimal { .. } => {
                let a = i64_src(&ch[0])?;
                build(n, dt, ColumnData::Decimal, |i| Ok(a.get(i).map(|x| -x)))
            }
            other => Err(EvalError::Type(format!("negation of {other}"))),
        },
        BoundExpr::Not(_) => {
            let a = bool_src(&ch[0])?;
            bool_column(n, |i| Ok(a.get(i).map(|b| !b)))
        }
        BoundExpr::Binary {
            op,
            left,
            right,
            data_type,
        } => {
            if matches!(op, BinaryOp::And | BinaryOp::Or) {
                logical(*op, &ch[0], &ch[1], n)
            } else if op.is_comparison() {
                compare(*op, &ch[0], &ch[1], left.data_type(), n)
            } else {
                arithmetic(*op, &ch[0], &ch[1], (left.data_type(), right.data_type()), *data_type, n)
            }
        }
        BoundExpr::IsNull { negated, .. } => match &ch[0] {
            Datum::Scalar(v) => bool_column(n, |_| Ok(Some(v.is_null() != *negated))),
            Datum::Array(c) => bool_column(n, |i| Ok(Some(c.is_valid(i) == *negated))),
        },
        BoundExpr::InList { expr, list, negated } => in_list(&ch[0], expr.data_type(), list, *negated, n),
        BoundExpr::Case { whens, data_type, .. } => {
            let k = whens.len();
            let conds: Vec<Src<bool>> = (0..k).map(|j| bool_src(&ch[2 * j])).collect::<Result<_, _>>()?;
            let mut out = ColumnBuilder::new(*data_type, n);
            let value_at = |d: &Datum, i: usize| -> ScalarValue {
                match d {
                    Datum::Scalar(v) => v.clone(),
                    Datum::Array(c) => c.value(i),
                }
            };
            for i in 0..n {
                let branch = (0..k).find(|&j| conds[j].get(i) == Some(true));
                let v = match branch {
                    Some(j) => value_at(&ch[2 * j + 1], i),
                    None if ch.len() > 2 * k => value_at(&ch[2 * k], i),
                    None => ScalarValue::Null,
                };
                out.push(&v).map_err(|e| EvalError::Type(e.to_string()))?;
            }
            Ok(out.finish())
        }
    }
}

/// Evaluates `e` to a full column of the batch's length.
pub fn evaluate(e: &BoundExpr, batch: &RecordBatch) -> Result<Column, EvalError> {
    evaluate_datum(e, batch)?.into_column(e.data_type(), batch.num_rows())
}

/// Evaluates a column-free expression.
pub fn evaluate_constant(e: &BoundExpr) -> Result<ScalarValue, EvalError> {
    let batch = RecordBatch {
        schema: std::sync::Arc::new(Schema::default()),
        columns: vec![],
        row_count: 1,
    };
    Ok(evaluate(e, &batch)?.value(0))
}

/// Row indices where the predicate is true (NULL counts as false).
pub fn selection(predicate: &BoundExpr, batch: &RecordBatch) -> Result<Vec<usize>, EvalError> {
    let n = batch.num_rows();
    match evaluate_datum(predicate, batch)? {
        Datum::Scalar(ScalarValue::Bool(true)) => Ok((0..n).collect()),
        Datum::Scalar(_) => Ok(vec![]),
        Datum::Array(c) => match &c.data {
            ColumnData::Bool(v) => Ok((0..n).filter(|&i| v[i] && c.is_valid(i)).collect()),
            _ => Err(EvalError::Type("predicate is not boolean".into())),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::storage::{Field, ScalarValue as S};
    use std::sync::Arc;

    fn batch() -> RecordBatch {
        let schema = Arc::new(Schema::new(vec![
            Field::new("q", DataType::decimal(15, 2), true),
            Field::new("n", DataType::Int64, true),
            Field::new("s", DataType::Utf8, true),
            Field::new("b", DataType::Bool, true),
        ]));
        RecordBatch::from_rows(
            schema,
            &[
                vec![S::Decimal { value: 150, scale: 2 }, S::Int64(3), S::Utf8("MAIL".into()), S::Bool(true)],
                vec![S::Null, S::Int64(0), S::Utf8("AIR".into()), S::Null],
                vec![S::Decimal { value: -25, scale: 2 }, S::Null, S::Null, S::Bool(false)],
            ],
        )
        .unwrap()
    }

    fn col(name: &str, dt: DataType) -> BoundExpr {
        BoundExpr::column(name, dt)
    }

    fn lit(v: S, dt: DataType) -> BoundExpr {
        BoundExpr::literal(v, dt)
    }

    fn values(e: &BoundExpr) -> Vec<S> {
        let c = evaluate(e, &batch()).unwrap();
        (0..c.len()).map(|i| c.value(i)).collect()
    }

    #[test]
    fn decimal_arithmetic_and_nulls() {
        let q = col("q", DataType::decimal(15, 2));
        let e = BoundExpr::binary(BinaryOp::Multiply, q.clone(), q.clone(), DataType::decimal(18, 4));
        assert_eq!(values(&e), vec![S::Decimal { value: 22500, scale: 4 }, S::Null, S::Decimal { value: 625, scale: 4 }]);
        let n = BoundExpr::Cast {
            expr: Box::new(col("n", DataType::Int64)),
            data_type: DataType::decimal(18, 0),
        };
        let e = BoundExpr::binary(BinaryOp::Divide, q, n, DataType::decimal(18, 6));
        // 1.50 / 3 = 0.5; division by zero and NULL give NULL.
        assert_eq!(values(&e), vec![S::Decimal { value: 500_000, scale: 6 }, S::Null, S::Null]);
    }

    #[test]
    fn three_valued_logic() {
        let b = col("b", DataType::Bool);
        let f = lit(S::Bool(false), DataType::Bool);
        let t = lit(S::Bool(true), DataType::Bool);
        let and = BoundExpr::and(b.clone(), f);
        assert_eq!(values(&and), vec![S::Bool(false), S::Bool(false), S::Bool(false)]);
        let or = BoundExpr::binary(BinaryOp::Or, b.clone(), t, DataType::Bool);
        assert_eq!(values(&or), vec![S::Bool(true); 3]);
        let not = BoundExpr::Not(Box::new(b));
        assert_eq!(values(&not), vec![S::Bool(false), S::Null, S::Bool(true)]);
    }

    #[test]
    fn comparisons_in_list_and_case() {
        let s = col("s", DataType::Utf8);
        let e = BoundExpr::InList {
            expr: Box::new(s.clone()),
            list: vec![S::Utf8("MAIL".into()), S::Utf8("SHIP".into())],
            negated: false,
        };
        assert_eq!(values(&e), vec![S::Bool(true), S::Bool(false), S::Null]);
        let cmp = BoundExpr::binary(BinaryOp::Lt, s, lit(S::Utf8("B".into()), DataType::Utf8), DataType::Bool);
        let case = BoundExpr::Case {
            whens: vec![(cmp, lit(S::Int64(1), DataType::Int64))],
            else_expr: Some(Box::new(lit(S::Int64(0), DataType::Int64))),
            data_type: DataType::Int64,
        };
        assert_eq!(values(&case), vec![S::Int64(0), S::Int64(1), S::Int64(0)]);
        let sel = selection(
            &BoundExpr::binary(
                BinaryOp::GtEq,
                col("q", DataType::decimal(15, 2)),
                lit(S::Decimal { value: 0, scale: 2 }, DataType::decimal(18, 2)),
                DataType::Bool,
            ),
            &batch(),
        )
        .unwrap();
        assert_eq!(sel, vec![0]);
    }

    #[test]
    fn constants_fold_and_overflow_is_reported() {
        let e = BoundExpr::binary(
            BinaryOp::Minus,
            lit(S::Decimal { value: 6, scale: 2 }, DataType::decimal(18, 2)),
            lit(S::Decimal { value: 1, scale: 2 }, DataType::decimal(18, 2)),
            DataType::decimal(18, 2),
        );
        assert_eq!(evaluate_constant(&e).unwrap(), S::Decimal { value: 5, scale: 2 });
        let big = lit(S::Int64(i64::MAX), DataType::Int64);
        let e = BoundExpr::binary(BinaryOp::Plus, big.clone(), big, DataType::Int64);
        assert!(matches!(evaluate_constant(&e), Err(EvalError::Overflow(_))));
        let missing = col("zzz", DataType::Int64);
        assert!(matches!(evaluate(&missing, &batch()), Err(EvalError::MissingColumn(_))));
    }

    #[test]
    fn casts() {
        let n = col("n", DataType::Int64);
        let e = BoundExpr::Cast {
            expr: Box::new(n.clone()),
            data_type: DataType::decimal(18, 2),
        };
        assert_eq!(values(&e)[0], S::Decimal { value: 300, scale: 2 });
        let e = BoundExpr::Cast {
            expr: Box::new(n),
            data_type: DataType::Float64,
        };
        assert_eq!(values(&e)[0], S::Float64(3.0));
        let e = BoundExpr::Cast {
            expr: Box::new(col("q", DataType::decimal(15, 2))),
            data_type: DataType::decimal(18, 1),
        };
        // -0.25 rounds half to even at one digit.
        assert_eq!(values(&e)[2], S::Decimal { value: -2, scale: 1 });
    }
}
