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

//! Binder: resolves names against the catalog, assigns types, inserts
//! implicit numeric promotions and builds the logical plan.

use std::collections::HashSet;

use super::ast::{self, BinaryOp, IntervalUnit, Literal, SelectItem, UnaryOp};
use super::expr::{AggFunc, AggregateExpr, BoundExpr, SortKey};
use super::plan::{JoinSide, LogicalPlan};
use super::SqlError;
use crate::storage::types::{add_months, checked_decimal, parse_date, parse_decimal};
use crate::storage::{Catalog, DataType, ScalarValue, Schema};

const AGGREGATES: &[&str] = &["sum", "avg", "count", "min", "max"];

#[derive(Debug, Clone)]
struct ScopeColumn {
    qualifier: String,
    name: String,
    data_type: DataType,
}

#[derive(Debug, Clone, Default)]
struct Scope {
    columns: Vec<ScopeColumn>,
}

impl Scope {
    fn from_schema(qualifier: &str, schema: &Schema) -> Self {
        Scope {
            columns: schema
                .fields
                .iter()
                .map(|f| ScopeColumn {
                    qualifier: qualifier.to_string(),
                    name: f.name.clone(),
                    data_type: f.data_type,
                })
                .collect(),
        }
    }

    fn merge(mut self, other: Scope) -> Result<Scope, SqlError> {
        for c in &other.columns {
            if self.columns.iter().any(|x| x.name == c.name) {
                return Err(SqlError::NotSupported(format!(
                    "joined inputs share the column name {}",
                    c.name
                )));
            }
        }
        self.columns.extend(other.columns);
        Ok(self)
    }

    fn resolve(&self, table: Option<&str>, name: &str) -> Result<BoundExpr, SqlError> {
        let matches: Vec<&ScopeColumn> = self
            .columns
            .iter()
            .filter(|c| c.name == name && table.map_or(true, |t| t == c.qualifier))
            .collect();
        let display = match table {
            Some(t) => format!("{t}.{name}"),
            None => name.to_string(),
        };
        match matches.as_slice() {
            [] => Err(SqlError::UnknownColumn(display)),
            [c] => Ok(BoundExpr::column(c.name.clone(), c.data_type)),
            _ => Err(SqlError::AmbiguousColumn(display)),
        }
    }
}

/// Grouping state while binding the select list of an aggregate query.
struct AggState {
    input: Scope,
    keys: Vec<(BoundExpr, String)>,
    aggregates: Vec<AggregateExpr>,
    names: HashSet<String>,
}

fn unique_name(base: String, taken: &mut HashSet<String>) -> String {
    let mut name = base.clone();
    let mut i = 2;
    while !taken.insert(name.clone()) {
        name = format!("{base}_{i}");
        i += 1;
    }
    name
}

fn is_aggregate_call(e: &ast::Expr) -> bool {
    matches!(e, ast::Expr::Function { name, .. } if AGGREGATES.contains(&name.as_str()))
}

fn contains_aggregate(e: &ast::Expr) -> bool {
    use ast::Expr::*;
    if is_aggregate_call(e) {
        return true;
    }
    match e {
        Column { .. } | Literal(_) => false,
        Unary { expr, .. } | IsNull { expr, .. } => contains_aggregate(expr),
        Binary { left, right, .. } => contains_aggregate(left) || contains_aggregate(right),
        Between { expr, low, high, .. } => {
            contains_aggregate(expr) || contains_aggregate(low) || contains_aggregate(high)
        }
        InList { expr, list, .. } => contains_aggregate(expr) || list.iter().any(contains_aggregate),
        Case {
            operand,
            whens,
            else_expr,
        } => {
            operand.as_deref().is_some_and(contains_aggregate)
                || whens.iter().any(|(w, t)| contains_aggregate(w) || contains_aggregate(t))
                || else_expr.as_deref().is_some_and(contains_aggregate)
        }
        Function { args, .. } => args.iter().any(contains_aggregate),
    }
}

fn mismatch(msg: impl Into<String>) -> SqlError {
    SqlError::TypeMismatch(msg.into())
}

fn is_null_literal(e: &BoundExpr) -> bool {
    matches!(e, BoundExpr::Literal { value: ScalarValue::Null, .. })
}

/// Types equal up to decimal precision.
fn same_repr(a: DataType, b: DataType) -> bool {
    match (a, b) {
        (DataType::Decimal { scale: x, .. }, DataType::Decimal { scale: y, .. }) => x == y,
        _ => a == b,
    }
}

/// Converts `e` to `dt`, folding literals and eliding no-op casts.
pub(crate) fn cast_to(e: BoundExpr, dt: DataType) -> Result<BoundExpr, SqlError> {
    if same_repr(e.data_type(), dt) {
        return Ok(e);
    }
    match e {
        BoundExpr::Literal { value, .. } => {
            let value = value.cast(dt).map_err(|err| mismatch(err.to_string()))?;
            Ok(BoundExpr::literal(value, dt))
        }
        other => Ok(BoundExpr::Cast {
            expr: Box::new(other),
            data_type: dt,
        }),
    }
}

/// Widest numeric type: float beats decimal beats integer.
fn numeric_common(types: &[DataType]) -> DataType {
    if types.contains(&DataType::Float64) {
        DataType::Float64
    } else if let Some(s) = types
        .iter()
        .filter_map(|t| matches!(t, DataType::Decimal { .. }).then(|| t.scale()))
        .max()
    {
        DataType::decimal(18, s)
    } else {
        DataType::Int64
    }
}

/// Common type for comparing or unifying values of the given expressions;
/// NULL literals adopt whatever the others agree on.
fn common_type(exprs: &[&BoundExpr]) -> Result<Option<DataType>, SqlError> {
    let types: Vec<DataType> = exprs
        .iter()
        .filter(|e| !is_null_literal(e))
        .map(|e| e.data_type())
        .collect();
    let Some(&first) = types.first() else {
        return Ok(None);
    };
    if types.iter().all(|t| t.is_numeric()) {
        return Ok(Some(numeric_common(&types)));
    }
    // A string literal may stand in for a date.
    let has_date = types.contains(&DataType::Date);
    let all_ok = exprs.iter().filter(|e| !is_null_literal(e)).all(|e| {
        let t = e.data_type();
        same_repr(t, first)
            || (has_date
                && t == DataType::Utf8
                && matches!(e, BoundExpr::Literal { value: ScalarValue::Utf8(s), .. } if parse_date(s).is_some()))
            || (has_date && t == DataType::Date)
    });
    if !all_ok {
        let names: Vec<String> = types.iter().map(|t| t.to_string()).collect();
        return Err(mismatch(format!("incompatible types {}", names.join(", "))));
    }
    Ok(Some(if has_date { DataType::Date } else { first }))
}

fn unify(exprs: Vec<BoundExpr>) -> Result<(Vec<BoundExpr>, DataType), SqlError> {
    let refs: Vec<&BoundExpr> = exprs.iter().collect();
    let dt = common_type(&refs)?.unwrap_or(DataType::Int64);
    let out = exprs
        .into_iter()
        .map(|e| cast_to(e, dt))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((out, dt))
}

fn require_bool(e: &BoundExpr, what: &str) -> Result<(), SqlError> {
    if e.data_type() == DataType::Bool || is_null_literal(e) {
        Ok(())
    } else {
        Err(mismatch(format!("{what} must be boolean, found {}", e.data_type())))
    }
}

/// Types an arithmetic operation; decimal scales follow the usual
/// fixed-point rules (max for add/sub, sum for mul, fixed for div).
pub(crate) fn arithmetic(op: BinaryOp, l: BoundExpr, r: BoundExpr) -> Result<BoundExpr, SqlError> {
    let (l, r) = match (is_null_literal(&l), is_null_literal(&r)) {
        (true, false) => (BoundExpr::literal(ScalarValue::Null, r.data_type()), r),
        (false, true) => {
            let t = l.data_type();
            (l, BoundExpr::literal(ScalarValue::Null, t))
        }
        _ => (l, r),
    };
    let (lt, rt) = (l.data_type(), r.data_type());
    if !lt.is_numeric() || !rt.is_numeric() {
        return Err(mismatch(format!("cannot apply {} to {lt} and {rt}", op.symbol())));
    }
    if lt == DataType::Float64 || rt == DataType::Float64 {
        let (l, r) = (cast_to(l, DataType::Float64)?, cast_to(r, DataType::Float64)?);
        return Ok(BoundExpr::binary(op, l, r, DataType::Float64));
    }
    if lt == DataType::Int64 && rt == DataType::Int64 && op != BinaryOp::Divide {
        return Ok(BoundExpr::binary(op, l, r, DataType::Int64));
    }
    let (s1, s2) = (lt.scale(), rt.scale());
    let l = cast_to(l, DataType::decimal(18, s1))?;
    let r = cast_to(r, DataType::decimal(18, s2))?;
    match op {
        BinaryOp::Plus | BinaryOp::Minus => {
            let s = s1.max(s2);
            let l = cast_to(l, DataType::decimal(18, s))?;
            let r = cast_to(r, DataType::decimal(18, s))?;
            Ok(BoundExpr::binary(op, l, r, DataType::decimal(18, s)))
        }
        BinaryOp::Multiply => {
            let s = s1 + s2;
            if s > 18 {
                return Err(mismatch(format!("product scale {s} exceeds 18")));
            }
            Ok(BoundExpr::binary(op, l, r, DataType::decimal(18, s)))
        }
        BinaryOp::Divide => Ok(BoundExpr::binary(
            op,
            l,
            r,
            DataType::decimal(18, super::expr::AVG_SCALE),
        )),
        _ => unreachable!("not an arithmetic operator"),
    }
}

pub(crate) fn comparison(op: BinaryOp, l: BoundExpr, r: BoundExpr) -> Result<BoundExpr, SqlError> {
    let (mut v, _) = unify(vec![l, r])?;
    let r = v.pop().expect("two operands");
    let l = v.pop().expect("two operands");
    Ok(BoundExpr::binary(op, l, r, DataType::Bool))
}

fn number_literal(text: &str) -> Result<BoundExpr, SqlError> {
    if !text.contains('.') {
        if let Ok(v) = text.parse::<i64>() {
            return Ok(BoundExpr::literal(ScalarValue::Int64(v), DataType::Int64));
        }
    }
    let (v, scale) = parse_decimal(text).ok_or_else(|| SqlError::InvalidLiteral(text.into()))?;
    let value = checked_decimal(v).map_err(|_| SqlError::InvalidLiteral(text.into()))?;
    Ok(BoundExpr::literal(
        ScalarValue::Decimal { value, scale },
        DataType::decimal(18, scale),
    ))
}

fn literal(l: &Literal) -> Result<BoundExpr, SqlError> {
    match l {
        Literal::Number(n) => number_literal(n),
        Literal::String(s) => Ok(BoundExpr::literal(ScalarValue::Utf8(s.clone()), DataType::Utf8)),
        Literal::Date(s) => {
            let d = parse_date(s).ok_or_else(|| SqlError::InvalidLiteral(format!("date '{s}'")))?;
            Ok(BoundExpr::literal(ScalarValue::Date(d), DataType::Date))
        }
        Literal::Boolean(b) => Ok(BoundExpr::literal(ScalarValue::Bool(*b), DataType::Bool)),
        Literal::Null => Ok(BoundExpr::literal(ScalarValue::Null, DataType::Int64)),
        Literal::Interval { .. } => Err(mismatch(
            "an interval may only be added to or subtracted from a date",
        )),
    }
}

/// `date ± interval`, evaluated to a date literal.
fn date_arithmetic(op: BinaryOp, date: BoundExpr, interval: &Literal, interval_first: bool) -> Result<BoundExpr, SqlError> {
    let Literal::Interval { value, unit, .. } = interval else {
        unreachable!("caller passes an interval");
    };
    if interval_first && op == BinaryOp::Minus {
        return Err(mismatch("cannot subtract a date from an interval"));
    }
    let n: i32 = value
        .trim()
        .parse()
        .map_err(|_| SqlError::InvalidLiteral(format!("interval '{value}'")))?;
    let n = if op == BinaryOp::Minus { -n } else { n };
    match date {
        BoundExpr::Literal {
            value: ScalarValue::Date(d),
            ..
        } => {
            let out = match unit {
                IntervalUnit::Day => d + n,
                IntervalUnit::Month => add_months(d, n),
                IntervalUnit::Year => add_months(d, n * 12),
            };
            Ok(BoundExpr::literal(ScalarValue::Date(out), DataType::Date))
        }
        other if other.data_type() == DataType::Date => Err(SqlError::NotSupported(
            "interval arithmetic on non-constant dates".into(),
        )),
        other => Err(mismatch(format!("cannot add an interval to {}", other.data_type()))),
    }
}

struct Binder<'a> {
    catalog: &'a Catalog,
}

impl<'a> Binder<'a> {
    fn scan(&self, t: &ast::TableRef) -> Result<(LogicalPlan, Scope), SqlError> {
        let (ts, manifest) = self.catalog.resolve(&t.name)?;
        let qualifier = t.alias.clone().unwrap_or_else(|| t.name.clone());
        let plan = LogicalPlan::Scan {
            table: ts.name.to_lowercase(),
            columns: ts.schema.fields.iter().map(|f| f.name.clone()).collect(),
            schema: ts.schema.clone(),
            table_bytes: manifest.total_bytes(),
            manifest_version: manifest.version.clone(),
        };
        Ok((plan, Scope::from_schema(&qualifier, &ts.schema)))
    }

    fn from(&self, items: &[ast::FromItem]) -> Result<(LogicalPlan, Scope), SqlError> {
        let mut acc: Option<(LogicalPlan, Scope)> = None;
        for item in items {
            let (mut plan, mut scope) = self.scan(&item.table)?;
            for j in &item.joins {
                let (rp, rs) = self.scan(&j.table)?;
                scope = scope.merge(rs)?;
                let on = self.expr(&j.on, &scope, &mut None)?;
                require_bool(&on, "join condition")?;
                plan = LogicalPlan::Join {
                    left: Box::new(plan),
                    right: Box::new(rp),
                    on: Some(on),
                    build: JoinSide::Right,
                };
            }
            acc = Some(match acc {
                None => (plan, scope),
                Some((lp, ls)) => (
                    LogicalPlan::Join {
                        left: Box::new(lp),
                        right: Box::new(plan),
                        on: None,
                        build: JoinSide::Right,
                    },
                    ls.merge(scope)?,
                ),
            });
        }
        Ok(acc.unwrap_or_else(|| {
            (
                LogicalPlan::Values {
                    schema: Schema::default(),
                    rows: vec![vec![]],
                },
                Scope::default(),
            )
        }))
    }

    fn agg_call(
        &self,
        e: &ast::Expr,
        st: &mut AggState,
        preferred: Option<String>,
    ) -> Result<BoundExpr, SqlError> {
        let ast::Expr::Function { name, args, star } = e else {
            unreachable!("caller checked for an aggregate call");
        };
        let func = match (name.as_str(), *star) {
            ("count", true) => AggFunc::CountStar,
            ("count", false) => AggFunc::Count,
            ("sum", false) => AggFunc::Sum,
            ("avg", false) => AggFunc::Avg,
            ("min", false) => AggFunc::Min,
            ("max", false) => AggFunc::Max,
            (n, true) => return Err(SqlError::NotSupported(format!("{n}(*)"))),
            _ => unreachable!("aggregate names are fixed"),
        };
        let arg = if func == AggFunc::CountStar {
            None
        } else {
            if args.len() != 1 {
                return Err(SqlError::InvalidAggregate(format!("{name} takes exactly one argument")));
            }
            if contains_aggregate(&args[0]) {
                return Err(SqlError::InvalidAggregate(format!("nested aggregate in {e}")));
            }
            let input = st.input.clone();
            Some(self.expr(&args[0], &input, &mut None)?)
        };
        let data_type = AggregateExpr::result_type(func, arg.as_ref().map(|a| a.data_type()))
            .ok_or_else(|| {
                mismatch(format!(
                    "{name} is not defined for {}",
                    arg.as_ref().map_or("no argument".into(), |a| a.data_type().to_string())
                ))
            })?;
        if preferred.is_none() {
            if let Some(a) = st.aggregates.iter().find(|a| a.func == func && a.arg == arg) {
                return Ok(BoundExpr::column(a.name.clone(), a.data_type));
            }
        }
        let name = unique_name(preferred.unwrap_or_else(|| e.to_string()), &mut st.names);
        st.aggregates.push(AggregateExpr {
            func,
            arg,
            name: name.clone(),
            data_type,
        });
        Ok(BoundExpr::column(name, data_type))
    }

    /// Binds `e` against `scope`; with `agg` set, binds the select list of
    /// an aggregate query, mapping group keys and aggregate calls to the
    /// aggregate's output columns.
    fn expr(&self, e: &ast::Expr, scope: &Scope, agg: &mut Option<&mut AggState>) -> Result<BoundExpr, SqlError> {
        if let Some(st) = agg.as_deref_mut() {
            if !contains_aggregate(e) && !matches!(e, ast::Expr::Literal(_)) {
                let input = st.input.clone();
                if let Ok(b) = self.expr(e, &input, &mut None) {
                    if let Some((k, n)) = st.keys.iter().find(|(k, _)| *k == b) {
                        return Ok(BoundExpr::column(n.clone(), k.data_type()));
                    }
                }
            }
            if is_aggregate_call(e) {
                return self.agg_call(e, st, None);
            }
            if let ast::Expr::Column { table, name } = e {
                st.input.resolve(table.as_deref(), name)?;
                return Err(SqlError::UngroupedColumn(e.to_string()));
            }
        }
        match e {
            ast::Expr::Column { table, name } => scope.resolve(table.as_deref(), name),
            ast::Expr::Literal(l) => literal(l),
            ast::Expr::Unary { op: UnaryOp::Not, expr } => {
                let b = self.expr(expr, scope, agg)?;
                require_bool(&b, "NOT operand")?;
                Ok(BoundExpr::Not(Box::new(cast_to(b, DataType::Bool)?)))
            }
            ast::Expr::Unary { op: UnaryOp::Minus, expr } => {
                let b = self.expr(expr, scope, agg)?;
                if !b.data_type().is_numeric() {
                    return Err(mismatch(format!("cannot negate {}", b.data_type())));
                }
                Ok(BoundExpr::Negative(Box::new(b)))
            }
            ast::Expr::Binary { op, left, right } => {
                if matches!(op, BinaryOp::Plus | BinaryOp::Minus) {
                    if let ast::Expr::Literal(iv @ Literal::Interval { .. }) = right.as_ref() {
                        let d = self.expr(left, scope, agg)?;
                        return date_arithmetic(*op, d, iv, false);
                    }
                    if let ast::Expr::Literal(iv @ Literal::Interval { .. }) = left.as_ref() {
                        let d = self.expr(right, scope, agg)?;
                        return date_arithmetic(*op, d, iv, true);
                    }
                }
                let l = self.expr(left, scope, agg)?;
                let r = self.expr(right, scope, agg)?;
                match op {
                    BinaryOp::And | BinaryOp::Or => {
                        require_bool(&l, "logical operand")?;
                        require_bool(&r, "logical operand")?;
                        let l = cast_to(l, DataType::Bool)?;
                        let r = cast_to(r, DataType::Bool)?;
                        Ok(BoundExpr::binary(*op, l, r, DataType::Bool))
                    }
                    op if op.is_comparison() => comparison(*op, l, r),
                    op => arithmetic(*op, l, r),
                }
            }
            ast::Expr::Between {
                expr,
                negated,
                low,
                high,
            } => {
                let v = self.expr(expr, scope, agg)?;
                let lo = self.expr(low, scope, agg)?;
                let hi = self.expr(high, scope, agg)?;
                let both = BoundExpr::and(
                    comparison(BinaryOp::GtEq, v.clone(), lo)?,
                    comparison(BinaryOp::LtEq, v, hi)?,
                );
                Ok(if *negated {
                    BoundExpr::Not(Box::new(both))
                } else {
                    both
                })
            }
            ast::Expr::InList { expr, negated, list } => {
                let v = self.expr(expr, scope, agg)?;
                let mut items = Vec::with_capacity(list.len() + 1);
                items.push(v);
                for item in list {
                    let b = self.expr(item, scope, agg)?;
                    if !b.is_literal() {
                        return Err(SqlError::NotSupported("IN lists of non-constant values".into()));
                    }
                    items.push(b);
                }
                let (mut items, _) = unify(items)?;
                let v = items.remove(0);
                let list = items
                    .into_iter()
                    .map(|b| match b {
                        BoundExpr::Literal { value, .. } => value,
                        _ => unreachable!("checked literal above"),
                    })
                    .collect();
                Ok(BoundExpr::InList {
                    expr: Box::new(v),
                    list,
                    negated: *negated,
                })
            }
            ast::Expr::IsNull { expr, negated } => Ok(BoundExpr::IsNull {
                expr: Box::new(self.expr(expr, scope, agg)?),
                negated: *negated,
            }),
            ast::Expr::Case {
                operand,
                whens,
                else_expr,
            } => {
                let operand = match operand {
                    Some(o) => Some(self.expr(o, scope, agg)?),
                    None => None,
                };
                let mut conds = Vec::with_capacity(whens.len());
                let mut results = Vec::with_capacity(whens.len() + 1);
                for (w, t) in whens {
                    let w = self.expr(w, scope, agg)?;
                    let w = match &operand {
                        Some(o) => comparison(BinaryOp::Eq, o.clone(), w)?,
                        None => w,
                    };
                    require_bool(&w, "CASE condition")?;
                    conds.push(cast_to(w, DataType::Bool)?);
                    results.push(self.expr(t, scope, agg)?);
                }
                let has_else = else_expr.is_some();
                if let Some(e) = else_expr {
                    results.push(self.expr(e, scope, agg)?);
                }
                let (mut results, data_type) = unify(results)?;
                let else_expr = has_else.then(|| Box::new(results.pop().expect("else branch")));
                Ok(BoundExpr::Case {
                    whens: conds.into_iter().zip(results).collect(),
                    else_expr,
                    data_type,
                })
            }
            ast::Expr::Function { name, .. } if AGGREGATES.contains(&name.as_str()) => Err(
                SqlError::InvalidAggregate(format!("{e} is not allowed here")),
            ),
            ast::Expr::Function { name, .. } => Err(SqlError::NotSupported(format!("function {name}"))),
        }
    }

    fn query(&self, q: &ast::Query) -> Result<LogicalPlan, SqlError> {
        let (mut plan, scope) = self.from(&q.from)?;
        if let Some(w) = &q.selection {
            if contains_aggregate(w) {
                return Err(SqlError::InvalidAggregate("aggregates are not allowed in WHERE".into()));
            }
            let predicate = self.expr(w, &scope, &mut None)?;
            require_bool(&predicate, "WHERE clause")?;
            plan = LogicalPlan::Filter {
                input: Box::new(plan),
                predicate: cast_to(predicate, DataType::Bool)?,
            };
        }

        let aggregate_query = !q.group_by.is_empty()
            || q.select.iter().any(|s| matches!(s, SelectItem::Expr { expr, .. } if contains_aggregate(expr)));
        let mut select_exprs: Vec<&ast::Expr> = Vec::new();
        let mut names = HashSet::new();
        let mut exprs: Vec<(BoundExpr, String)> = Vec::new();

        if aggregate_query {
            let mut st = AggState {
                input: scope.clone(),
                keys: Vec::new(),
                aggregates: Vec::new(),
                names: HashSet::new(),
            };
            for g in &q.group_by {
                if contains_aggregate(g) {
                    return Err(SqlError::InvalidAggregate("aggregates are not allowed in GROUP BY".into()));
                }
                let b = self.expr(g, &scope, &mut None)?;
                let base = match &b {
                    BoundExpr::Column { name, .. } => name.clone(),
                    _ => g.to_string(),
                };
                if !st.keys.iter().any(|(k, _)| *k == b) {
                    let name = unique_name(base, &mut st.names);
                    st.keys.push((b, name));
                }
            }
            for item in &q.select {
                let SelectItem::Expr { expr, alias } = item else {
                    return Err(SqlError::UngroupedColumn("*".into()));
                };
                let b = if is_aggregate_call(expr) {
                    self.agg_call(expr, &mut st, alias.clone())?
                } else {
                    self.expr(expr, &scope, &mut Some(&mut st))?
                };
                let base = alias.clone().unwrap_or_else(|| match &b {
                    BoundExpr::Column { name, .. } => name.clone(),
                    _ => expr.to_string(),
                });
                exprs.push((b, unique_name(base, &mut names)));
                select_exprs.push(expr);
            }
            let identity: Vec<String> = st
                .keys
                .iter()
                .map(|(_, n)| n.clone())
                .chain(st.aggregates.iter().map(|a| a.name.clone()))
                .collect();
            plan = LogicalPlan::Aggregate {
                input: Box::new(plan),
                group_by: st.keys,
                aggregates: st.aggregates,
            };
            let is_identity = exprs.len() == identity.len()
                && exprs
                    .iter()
                    .zip(&identity)
                    .all(|((e, n), id)| n == id && matches!(e, BoundExpr::Column { name, .. } if name == id));
            if !is_identity {
                plan = LogicalPlan::Project {
                    input: Box::new(plan),
                    exprs: exprs.clone(),
                };
            }
        } else {
            let mut identity = true;
            let mut wildcard_count = 0;
            for item in &q.select {
                match item {
                    SelectItem::Wildcard => {
                        wildcard_count += 1;
                        for c in &scope.columns {
                            exprs.push((
                                BoundExpr::column(c.name.clone(), c.data_type),
                                unique_name(c.name.clone(), &mut names),
                            ));
                        }
                    }
                    SelectItem::Expr { expr, alias } => {
                        identity = false;
                        let b = self.expr(expr, &scope, &mut None)?;
                        let base = alias.clone().unwrap_or_else(|| match &b {
                            BoundExpr::Column { name, .. } => name.clone(),
                            _ => expr.to_string(),
                        });
                        exprs.push((b, unique_name(base, &mut names)));
                        select_exprs.push(expr);
                    }
                }
            }
            if !(identity && wildcard_count == 1) {
                plan = LogicalPlan::Project {
                    input: Box::new(plan),
                    exprs: exprs.clone(),
                };
            }
        }

        if !q.order_by.is_empty() {
            let out = plan.schema();
            let out_scope = Scope::from_schema("", &out);
            let mut keys = Vec::with_capacity(q.order_by.len());
            for o in &q.order_by {
                let expr = self.order_key(&o.expr, &out_scope, &out, &select_exprs, &exprs)?;
                keys.push(SortKey { expr, asc: o.asc });
            }
            plan = LogicalPlan::Sort {
                input: Box::new(plan),
                keys,
            };
        }
        if let Some(n) = q.limit {
            plan = LogicalPlan::Limit {
                input: Box::new(plan),
                n,
            };
        }
        Ok(plan)
    }

    /// Resolves an ORDER BY item against output names, ordinals, or select
    /// expressions, in that order.
    fn order_key(
        &self,
        e: &ast::Expr,
        out_scope: &Scope,
        out: &Schema,
        select_exprs: &[&ast::Expr],
        exprs: &[(BoundExpr, String)],
    ) -> Result<BoundExpr, SqlError> {
        if let ast::Expr::Column { table: None, name } = e {
            if let Some(f) = out.field(name) {
                return Ok(BoundExpr::column(f.name.clone(), f.data_type));
            }
        }
        if let ast::Expr::Literal(Literal::Number(n)) = e {
            let k: usize = n
                .parse()
                .map_err(|_| SqlError::NotSupported("ORDER BY a non-integer constant".into()))?;
            return match out.fields.get(k.wrapping_sub(1)) {
                Some(f) => Ok(BoundExpr::column(f.name.clone(), f.data_type)),
                None => Err(SqlError::UnknownColumn(format!("ordinal {k}"))),
            };
        }
        // Select items carry their original expressions only when a Project
        // or identity aggregate produced them; match by syntax.
        if let Some(i) = select_exprs.iter().position(|s| *s == e) {
            if let Some((_, n)) = exprs.get(i) {
                let f = out.field(n).expect("select output present");
                return Ok(BoundExpr::column(f.name.clone(), f.data_type));
            }
        }
        self.expr(e, out_scope, &mut None)
    }
}

/// Binds a parsed query against the catalog.
pub fn bind(q: &ast::Query, catalog: &Catalog) -> Result<LogicalPlan, SqlError> {
    Binder { catalog }.query(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sql::tpch;
    use crate::sql::{compile, parse_expr};
    use crate::storage::types::format_date;
    use crate::storage::Manifest;

    fn catalog() -> Catalog {
        let mut c = Catalog::new();
        for ts in [tpch::lineitem_schema(), tpch::orders_schema()] {
            let table = ts.name.clone();
            c.register(
                ts,
                Manifest {
                    table,
                    version: "v1".into(),
                    objects: vec![],
                },
            );
        }
        c
    }

    fn bind_expr_over_lineitem(text: &str) -> Result<BoundExpr, SqlError> {
        let c = catalog();
        let (_, scope) = Binder { catalog: &c }.scan(&ast::TableRef {
            name: "lineitem".into(),
            alias: None,
        })?;
        Binder { catalog: &c }.expr(&parse_expr(text)?, &scope, &mut None)
    }

    fn shape(p: &LogicalPlan) -> Vec<&'static str> {
        let mut v = vec![p.kind()];
        let mut cur = p;
        while let Some(i) = cur.inputs().first() {
            v.push(i.kind());
            cur = i;
        }
        v.reverse();
        v
    }

    #[test]
    fn q1_binds_to_scan_filter_aggregate_sort() {
        let p = compile(tpch::Q1, &catalog()).unwrap();
        assert_eq!(shape(&p), vec!["Scan", "Filter", "Aggregate", "Sort"]);
        let LogicalPlan::Sort { input, keys } = &p else { unreachable!() };
        assert_eq!(keys.len(), 2);
        let LogicalPlan::Aggregate { group_by, aggregates, input } = input.as_ref() else {
            unreachable!()
        };
        assert_eq!(group_by.len(), 2);
        assert_eq!(aggregates.len(), 8);
        let names: Vec<&str> = aggregates.iter().map(|a| a.name.as_str()).collect();
        assert_eq!(
            names,
            [
                "sum_qty",
                "sum_base_price",
                "sum_disc_price",
                "sum_charge",
                "avg_qty",
                "avg_price",
                "avg_disc",
                "count_order"
            ]
        );
        assert_eq!(aggregates[3].data_type, DataType::decimal(18, 6));
        assert_eq!(aggregates[4].data_type, DataType::decimal(18, 6));
        assert_eq!(aggregates[7].data_type, DataType::Int64);
        let LogicalPlan::Filter { predicate, .. } = input.as_ref() else { unreachable!() };
        assert_eq!(predicate.to_string(), "(l_shipdate <= date '1998-09-02')");
    }

    #[test]
    fn q6_and_q12_bind() {
        let p = compile(tpch::Q6, &catalog()).unwrap();
        assert_eq!(shape(&p), vec!["Scan", "Filter", "Aggregate"]);
        assert_eq!(p.schema().fields[0].data_type, DataType::decimal(18, 4));
        let p = compile(tpch::Q12, &catalog()).unwrap();
        assert_eq!(p.kind(), "Sort");
        assert_eq!(p.schema().len(), 3);
        assert_eq!(p.scans().len(), 2);
        assert_eq!(p.schema().fields[1].data_type, DataType::Int64);
    }

    #[test]
    fn ungrouped_column_is_rejected() {
        let err = compile("select l_tax, sum(l_quantity) from lineitem group by l_returnflag", &catalog());
        assert!(matches!(err, Err(SqlError::UngroupedColumn(c)) if c == "l_tax"));
        let err = compile("select l_tax, count(*) from lineitem", &catalog());
        assert!(matches!(err, Err(SqlError::UngroupedColumn(_))));
    }

    #[test]
    fn group_key_expressions_may_be_reused() {
        let p = compile(
            "select l_quantity + 1, count(*) as n from lineitem group by l_quantity + 1",
            &catalog(),
        )
        .unwrap();
        assert_eq!(shape(&p), vec!["Scan", "Aggregate"]);
    }

    #[test]
    fn string_plus_number_is_a_type_mismatch() {
        assert!(matches!(
            bind_expr_over_lineitem("l_quantity + 'abc'"),
            Err(SqlError::TypeMismatch(_))
        ));
        assert!(matches!(
            bind_expr_over_lineitem("l_shipdate = 3"),
            Err(SqlError::TypeMismatch(_))
        ));
    }

    #[test]
    fn date_plus_interval_is_folded() {
        let e = bind_expr_over_lineitem("date '1994-01-01' + interval '1' year").unwrap();
        let BoundExpr::Literal { value: ScalarValue::Date(d), .. } = e else {
            panic!("expected a date literal, got {e}");
        };
        assert_eq!(format_date(d), "1995-01-01");
        let e = bind_expr_over_lineitem("date '1998-12-01' - interval '90' day (3)").unwrap();
        assert_eq!(e.to_string(), "date '1998-09-02'");
        assert!(matches!(
            bind_expr_over_lineitem("l_shipdate + interval '1' day"),
            Err(SqlError::NotSupported(_))
        ));
    }

    #[test]
    fn decimal_scale_rules() {
        let t = |s: &str| bind_expr_over_lineitem(s).unwrap().data_type();
        assert_eq!(t("l_extendedprice * (1 - l_discount)"), DataType::decimal(18, 4));
        assert_eq!(t("l_extendedprice * (1 - l_discount) * (1 + l_tax)"), DataType::decimal(18, 6));
        assert_eq!(t("l_tax + 0.125"), DataType::decimal(18, 3));
        assert_eq!(t("l_linenumber / 2"), DataType::decimal(18, 6));
        assert_eq!(t("l_linenumber * 2"), DataType::Int64);
        assert_eq!(t("l_quantity / l_tax"), DataType::decimal(18, 6));
        let e = bind_expr_over_lineitem("l_discount between .06 - 0.01 and .06 + 0.01").unwrap();
        assert_eq!(e.conjuncts().len(), 2);
    }

    #[test]
    fn name_resolution_errors() {
        let c = catalog();
        assert!(matches!(compile("select x from nowhere", &c), Err(SqlError::UnknownTable(_))));
        assert!(matches!(compile("select nope from lineitem", &c), Err(SqlError::UnknownColumn(_))));
        assert!(matches!(
            compile("select l.l_tax from lineitem l", &c).map(|p| p.schema().fields[0].name.clone()),
            Ok(n) if n == "l_tax"
        ));
        assert!(matches!(
            compile("select o.l_tax from lineitem l", &c),
            Err(SqlError::UnknownColumn(_))
        ));
        assert!(matches!(
            compile("select * from lineitem a, lineitem b", &c),
            Err(SqlError::NotSupported(_))
        ));
        assert!(matches!(
            compile("select sum(sum(l_tax)) from lineitem", &c),
            Err(SqlError::InvalidAggregate(_))
        ));
        assert!(matches!(
            compile("select l_tax from lineitem where count(*) > 1", &c),
            Err(SqlError::InvalidAggregate(_))
        ));
    }

    #[test]
    fn select_without_from_and_order_by_forms() {
        let c = catalog();
        let p = compile("SELECT 1", &c).unwrap();
        assert_eq!(shape(&p), vec!["Values", "Project"]);
        assert_eq!(p.schema().fields[0].data_type, DataType::Int64);
        let p = compile("select l_tax as t from lineitem order by 1 desc limit 3", &c).unwrap();
        assert_eq!(shape(&p), vec!["Scan", "Project", "Sort", "Limit"]);
        let p = compile("select l_tax as t from lineitem order by t", &c).unwrap();
        assert_eq!(p.kind(), "Sort");
        let p = compile("select sum(l_tax) from lineitem order by sum(l_tax)", &c).unwrap();
        assert_eq!(p.kind(), "Sort");
        let p = compile("select * from lineitem", &c).unwrap();
        assert_eq!(p.kind(), "Scan");
        assert_eq!(p.schema().len(), 16);
    }

    #[test]
    fn case_and_in_list_types() {
        let e = bind_expr_over_lineitem("case when l_tax > 0 then 1 else 0.5 end").unwrap();
        assert_eq!(e.data_type(), DataType::decimal(18, 1));
        let e = bind_expr_over_lineitem("l_shipmode in ('MAIL', 'SHIP')").unwrap();
        assert_eq!(e.to_string(), "(l_shipmode in ('MAIL', 'SHIP'))");
        let e = bind_expr_over_lineitem("l_tax in (0, 0.02)").unwrap();
        assert!(matches!(e, BoundExpr::InList { .. }));
        let e = bind_expr_over_lineitem("case l_returnflag when 'R' then l_tax end").unwrap();
        assert!(matches!(e, BoundExpr::Case { else_expr: None, .. }));
    }
}
