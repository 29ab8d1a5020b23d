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

//! Rule-based logical rewrites, applied to a fixpoint: constant folding,
//! predicate pushdown, projection pruning and join input ordering.

use std::collections::BTreeSet;

use crate::exec::eval::evaluate_constant;
use crate::sql::{BinaryOp, BoundExpr, JoinSide, LogicalPlan};
use crate::storage::{DataType, ScalarValue, Schema};

const MAX_PASSES: usize = 16;

/// Optimizes a bound plan. The result is semantically equivalent and is a
/// fixpoint: optimizing it again returns it unchanged.
pub fn optimize_logical(plan: LogicalPlan) -> LogicalPlan {
    let mut cur = plan;
    for _ in 0..MAX_PASSES {
        let next = order_joins(prune(push_down(fold_plan(cur.clone())), None));
        if next == cur {
            return next;
        }
        cur = next;
    }
    cur
}

// ---- constant folding ----

fn is_bool(e: &BoundExpr, v: bool) -> bool {
    matches!(e, BoundExpr::Literal { value: ScalarValue::Bool(b), .. } if *b == v)
}

/// Folds column-free subexpressions and trivial boolean identities.
pub fn fold_expr(e: BoundExpr) -> BoundExpr {
    e.transform(&mut |node| {
        if matches!(node, BoundExpr::Column { .. } | BoundExpr::Literal { .. }) {
            return node;
        }
        if node.children().iter().all(|c| c.is_literal()) {
            let dt = node.data_type();
            // Evaluation errors such as overflow are left for run time.
            if let Ok(value) = evaluate_constant(&node) {
                return BoundExpr::literal(value, dt);
            }
            return node;
        }
        match node {
            BoundExpr::Binary {
                op: BinaryOp::And,
                left,
                right,
                ..
            } => {
                if is_bool(&left, true) {
                    *right
                } else if is_bool(&right, true) {
                    *left
                } else if is_bool(&left, false) || is_bool(&right, false) {
                    BoundExpr::literal(ScalarValue::Bool(false), DataType::Bool)
                } else {
                    BoundExpr::and(*left, *right)
                }
            }
            BoundExpr::Binary {
                op: BinaryOp::Or,
                left,
                right,
                ..
            } => {
                if is_bool(&left, false) {
                    *right
                } else if is_bool(&right, false) {
                    *left
                } else if is_bool(&left, true) || is_bool(&right, true) {
                    BoundExpr::literal(ScalarValue::Bool(true), DataType::Bool)
                } else {
                    BoundExpr::binary(BinaryOp::Or, *left, *right, DataType::Bool)
                }
            }
            other => other,
        }
    })
}

fn map_children(plan: LogicalPlan, f: &mut impl FnMut(LogicalPlan) -> LogicalPlan) -> LogicalPlan {
    match plan {
        p @ (LogicalPlan::Scan { .. } | LogicalPlan::Values { .. }) => p,
        LogicalPlan::Filter { input, predicate } => LogicalPlan::Filter {
            input: Box::new(f(*input)),
            predicate,
        },
        LogicalPlan::Project { input, exprs } => LogicalPlan::Project {
            input: Box::new(f(*input)),
            exprs,
        },
        LogicalPlan::Aggregate {
            input,
            group_by,
            aggregates,
        } => LogicalPlan::Aggregate {
            input: Box::new(f(*input)),
            group_by,
            aggregates,
        },
        LogicalPlan::Join {
            left,
            right,
            on,
            build,
        } => LogicalPlan::Join {
            left: Box::new(f(*left)),
            right: Box::new(f(*right)),
            on,
            build,
        },
        LogicalPlan::Sort { input, keys } => LogicalPlan::Sort {
            input: Box::new(f(*input)),
            keys,
        },
        LogicalPlan::Limit { input, n } => LogicalPlan::Limit {
            input: Box::new(f(*input)),
            n,
        },
    }
}

fn fold_plan(plan: LogicalPlan) -> LogicalPlan {
    let plan = map_children(plan, &mut fold_plan);
    match plan {
        LogicalPlan::Filter { input, predicate } => {
            let predicate = fold_expr(predicate);
            if is_bool(&predicate, true) {
                *input
            } else {
                LogicalPlan::Filter { input, predicate }
            }
        }
        LogicalPlan::Project { input, exprs } => LogicalPlan::Project {
            input,
            exprs: exprs.into_iter().map(|(e, n)| (fold_expr(e), n)).collect(),
        },
        LogicalPlan::Aggregate {
            input,
            group_by,
            mut aggregates,
        } => {
            for a in &mut aggregates {
                a.arg = a.arg.take().map(fold_expr);
            }
            LogicalPlan::Aggregate {
                input,
                group_by: group_by.into_iter().map(|(e, n)| (fold_expr(e), n)).collect(),
                aggregates,
            }
        }
        LogicalPlan::Join {
            left,
            right,
            on,
            build,
        } => LogicalPlan::Join {
            left,
            right,
            on: on.map(fold_expr).filter(|c| !is_bool(c, true)),
            build,
        },
        LogicalPlan::Sort { input, mut keys } => {
            for k in &mut keys {
                k.expr = fold_expr(k.expr.clone());
            }
            LogicalPlan::Sort { input, keys }
        }
        other => other,
    }
}

// ---- predicate pushdown ----

fn names(schema: &Schema) -> BTreeSet<String> {
    schema.fields.iter().map(|f| f.name.clone()).collect()
}

fn with_filter(input: LogicalPlan, conjuncts: Vec<BoundExpr>) -> LogicalPlan {
    match BoundExpr::conjunction(conjuncts) {
        None => input,
        Some(predicate) => LogicalPlan::Filter {
            input: Box::new(input),
            predicate,
        },
    }
}

/// Replaces references to a projection's outputs with their definitions.
fn substitute(e: BoundExpr, exprs: &[(BoundExpr, String)]) -> BoundExpr {
    e.transform(&mut |node| match &node {
        BoundExpr::Column { name, .. } => exprs
            .iter()
            .find(|(_, n)| n == name)
            .map(|(d, _)| d.clone())
            .unwrap_or(node),
        _ => node,
    })
}

/// Pushes `conjuncts` as far down into `plan` as they can go.
fn push_into(plan: LogicalPlan, conjuncts: Vec<BoundExpr>) -> LogicalPlan {
    match plan {
        LogicalPlan::Filter { input, predicate } => {
            let mut all = predicate.conjuncts();
            all.extend(conjuncts);
            push_into(*input, all)
        }
        LogicalPlan::Project { input, exprs } => {
            let pushed = conjuncts.into_iter().map(|c| substitute(c, &exprs)).collect();
            LogicalPlan::Project {
                input: Box::new(push_into(*input, pushed)),
                exprs,
            }
        }
        LogicalPlan::Sort { input, keys } => LogicalPlan::Sort {
            input: Box::new(push_into(*input, conjuncts)),
            keys,
        },
        LogicalPlan::Join {
            left,
            right,
            on,
            build,
        } => {
            let (ln, rn) = (names(&left.schema()), names(&right.schema()));
            let mut all = conjuncts;
            if let Some(c) = on {
                all.extend(c.conjuncts());
            }
            let (mut to_left, mut to_right, mut join_cond, mut constant) = (vec![], vec![], vec![], vec![]);
            for c in all {
                let cols = c.columns();
                if cols.is_empty() {
                    constant.push(c);
                } else if cols.is_subset(&ln) {
                    to_left.push(c);
                } else if cols.is_subset(&rn) {
                    to_right.push(c);
                } else {
                    join_cond.push(c);
                }
            }
            let join = LogicalPlan::Join {
                left: Box::new(push_into(*left, to_left)),
                right: Box::new(push_into(*right, to_right)),
                on: BoundExpr::conjunction(join_cond),
                build,
            };
            with_filter(join, constant)
        }
        LogicalPlan::Scan { .. } | LogicalPlan::Values { .. } => with_filter(plan, conjuncts),
        LogicalPlan::Aggregate {
            input,
            group_by,
            aggregates,
        } => {
            // Conjuncts over group keys alone commute with grouping.
            let key_names: BTreeSet<String> = group_by.iter().map(|(_, n)| n.clone()).collect();
            let (below, above): (Vec<_>, Vec<_>) = conjuncts
                .into_iter()
                .partition(|c| !c.columns().is_empty() && c.columns().is_subset(&key_names));
            let below = below.into_iter().map(|c| substitute(c, &group_by)).collect();
            let agg = LogicalPlan::Aggregate {
                input: Box::new(push_into(*input, below)),
                group_by,
                aggregates,
            };
            with_filter(agg, above)
        }
        LogicalPlan::Limit { input, n } => with_filter(
            LogicalPlan::Limit {
                input,
                n,
            },
            conjuncts,
        ),
    }
}

fn push_down(plan: LogicalPlan) -> LogicalPlan {
    match plan {
        LogicalPlan::Filter { input, predicate } => push_into(push_down(*input), predicate.conjuncts()),
        join @ LogicalPlan::Join { .. } => push_into(map_children(join, &mut push_down), vec![]),
        other => map_children(other, &mut push_down),
    }
}

// ---- projection pruning ----

/// Keeps only the columns `required` by the parent (`None` keeps all).
fn prune(plan: LogicalPlan, required: Option<&BTreeSet<String>>) -> LogicalPlan {
    match plan {
        LogicalPlan::Scan {
            table,
            columns,
            schema,
            table_bytes,
            manifest_version,
        } => {
            let Some(req) = required else {
                return LogicalPlan::Scan {
                    table,
                    columns,
                    schema,
                    table_bytes,
                    manifest_version,
                };
            };
            let mut keep: Vec<String> = columns.iter().filter(|c| req.contains(*c)).cloned().collect();
            if keep.is_empty() {
                // Row counts still flow; read the narrowest column.
                if let Some(f) = schema
                    .fields
                    .iter()
                    .min_by_key(|f| f.data_type.fixed_width().unwrap_or(usize::MAX))
                {
                    keep.push(f.name.clone());
                }
            }
            let schema = schema.project(&keep).expect("kept columns exist");
            LogicalPlan::Scan {
                table,
                columns: keep,
                schema,
                table_bytes,
                manifest_version,
            }
        }
        LogicalPlan::Filter { input, predicate } => {
            let child_req = required.map(|r| {
                let mut s = r.clone();
                predicate.collect_columns(&mut s);
                s
            });
            LogicalPlan::Filter {
                input: Box::new(prune(*input, child_req.as_ref())),
                predicate,
            }
        }
        LogicalPlan::Project { input, exprs } => {
            let exprs: Vec<(BoundExpr, String)> = match required {
                Some(r) => exprs.into_iter().filter(|(_, n)| r.contains(n)).collect(),
                None => exprs,
            };
            let mut child_req = BTreeSet::new();
            for (e, _) in &exprs {
                e.collect_columns(&mut child_req);
            }
            let input = prune(*input, Some(&child_req));
            let in_schema = input.schema();
            let identity = exprs.len() == in_schema.len()
                && exprs.iter().zip(&in_schema.fields).all(|((e, n), f)| {
                    n == &f.name && matches!(e, BoundExpr::Column { name, .. } if name == &f.name)
                });
            if identity {
                input
            } else {
                LogicalPlan::Project {
                    input: Box::new(input),
                    exprs,
                }
            }
        }
        LogicalPlan::Aggregate {
            input,
            group_by,
            aggregates,
        } => {
            let mut child_req = BTreeSet::new();
            for (e, _) in &group_by {
                e.collect_columns(&mut child_req);
            }
            for a in &aggregates {
                if let Some(arg) = &a.arg {
                    arg.collect_columns(&mut child_req);
                }
            }
            LogicalPlan::Aggregate {
                input: Box::new(prune(*input, Some(&child_req))),
                group_by,
                aggregates,
            }
        }
        LogicalPlan::Join {
            left,
            right,
            on,
            build,
        } => {
            let mut req: BTreeSet<String> = match required {
                Some(r) => r.clone(),
                None => names(&left.schema()).union(&names(&right.schema())).cloned().collect(),
            };
            if let Some(c) = &on {
                c.collect_columns(&mut req);
            }
            let lreq: BTreeSet<String> = req.intersection(&names(&left.schema())).cloned().collect();
            let rreq: BTreeSet<String> = req.intersection(&names(&right.schema())).cloned().collect();
            LogicalPlan::Join {
                left: Box::new(prune(*left, Some(&lreq))),
                right: Box::new(prune(*right, Some(&rreq))),
                on,
                build,
            }
        }
        LogicalPlan::Sort { input, keys } => {
            let child_req = required.map(|r| {
                let mut s = r.clone();
                for k in &keys {
                    k.expr.collect_columns(&mut s);
                }
                s
            });
            LogicalPlan::Sort {
                input: Box::new(prune(*input, child_req.as_ref())),
                keys,
            }
        }
        LogicalPlan::Limit { input, n } => LogicalPlan::Limit {
            input: Box::new(prune(*input, required)),
            n,
        },
        v @ LogicalPlan::Values { .. } => v,
    }
}

// ---- join ordering ----

/// Estimated bytes a subtree reads: table bytes scaled by the fraction of
/// columns scanned.
pub fn estimated_bytes(plan: &LogicalPlan) -> u64 {
    match plan {
        LogicalPlan::Scan { table_bytes, .. } => *table_bytes,
        other => other.inputs().into_iter().map(estimated_bytes).sum(),
    }
}

fn order_joins(plan: LogicalPlan) -> LogicalPlan {
    match map_children(plan, &mut order_joins) {
        LogicalPlan::Join { left, right, on, .. } => {
            let build = if estimated_bytes(&left) < estimated_bytes(&right) {
                JoinSide::Left
            } else {
                JoinSide::Right
            };
            LogicalPlan::Join { left, right, on, build }
        }
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sql::{compile, tpch};
    use crate::storage::{Catalog, Manifest, ManifestObject};

    fn catalog() -> Catalog {
        let mut c = Catalog::new();
        for (ts, bytes) in [(tpch::lineitem_schema(), 7_000u64), (tpch::orders_schema(), 2_000)] {
            let table = ts.name.clone();
            c.register(
                ts,
                Manifest {
                    table: table.clone(),
                    version: "v1".into(),
                    objects: vec![ManifestObject {
                        bucket: "b".into(),
                        key: format!("{table}/0"),
                        file_bytes: bytes,
                        row_count: 1,
                        row_groups: 1,
                    }],
                },
            );
        }
        c
    }

    fn find_scan<'a>(p: &'a LogicalPlan, table: &str) -> &'a LogicalPlan {
        p.scans()
            .into_iter()
            .find(|s| matches!(s, LogicalPlan::Scan { table: t, .. } if t == table))
            .expect("scan present")
    }

    fn scan_columns(p: &LogicalPlan, table: &str) -> Vec<String> {
        match find_scan(p, table) {
            LogicalPlan::Scan { columns, .. } => columns.clone(),
            _ => unreachable!(),
        }
    }

    #[test]
    fn q12_prunes_orders_to_two_columns_and_pushes_filters() {
        let bound = compile(tpch::Q12, &catalog()).unwrap();
        assert_eq!(scan_columns(&bound, "orders").len(), 9);
        let opt = optimize_logical(bound);
        let mut cols = scan_columns(&opt, "orders");
        cols.sort();
        assert_eq!(cols, vec!["o_orderkey", "o_orderpriority"]);
        let mut l = scan_columns(&opt, "lineitem");
        l.sort();
        assert_eq!(
            l,
            vec!["l_commitdate", "l_orderkey", "l_receiptdate", "l_shipdate", "l_shipmode"]
        );
        // The equi-condition moved into the join; lineitem filters sit on its side.
        let mut join = &opt;
        while !matches!(join, LogicalPlan::Join { .. }) {
            join = join.inputs()[0];
        }
        let LogicalPlan::Join { left, right, on, build } = join else { unreachable!() };
        assert_eq!(on.as_ref().unwrap().to_string(), "(o_orderkey = l_orderkey)");
        assert_eq!(*build, JoinSide::Left);
        assert_eq!(left.kind(), "Scan");
        assert_eq!(right.kind(), "Filter");
    }

    #[test]
    fn constants_fold_and_fixpoint_holds() {
        let opt = optimize_logical(compile(tpch::Q6, &catalog()).unwrap());
        let text = opt.to_string();
        assert!(text.contains("(l_discount >= 0.05)"), "{text}");
        assert!(text.contains("(l_discount <= 0.07)"), "{text}");
        assert_eq!(optimize_logical(opt.clone()), opt);
        let q1 = optimize_logical(compile(tpch::Q1, &catalog()).unwrap());
        assert_eq!(scan_columns(&q1, "lineitem").len(), 7);
    }

    #[test]
    fn filter_above_join_moves_to_one_side() {
        let c = catalog();
        let plan = compile(
            "select l_tax from lineitem join orders on l_orderkey = o_orderkey where o_custkey = 3",
            &c,
        )
        .unwrap();
        let opt = optimize_logical(plan);
        let o = &opt.inputs()[0];
        let LogicalPlan::Join { right, .. } = o else { panic!("{opt}") };
        assert_eq!(right.kind(), "Filter");
    }

    #[test]
    fn filters_pass_through_projections() {
        let c = catalog();
        let plan = compile("select * from lineitem where 1 = 1 and l_tax > 0", &c).unwrap();
        let opt = optimize_logical(plan);
        assert_eq!(opt.to_string().lines().count(), 2, "{opt}");
        let plan = compile("select count(*) from lineitem where false", &c).unwrap();
        let opt = optimize_logical(plan);
        assert!(opt.to_string().contains("Filter false"));
    }

    #[test]
    fn count_star_keeps_one_narrow_column() {
        let opt = optimize_logical(compile("select count(*) from lineitem", &catalog()).unwrap());
        assert_eq!(scan_columns(&opt, "lineitem"), vec!["l_shipdate"]);
    }
}
