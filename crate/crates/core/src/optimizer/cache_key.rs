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

//! Result-cache keys: SHA-256 over a canonical rendering of the optimized
//! logical plan, which embeds each scanned table's manifest version.
//!
//! Physical choices (worker counts, join strategy, build side) are not part
//! of the rendering, so they never change the key.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::sql::{BinaryOp, BoundExpr, LogicalPlan};
use crate::storage::ScalarValue;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ResultCacheKey(pub [u8; 32]);

impl ResultCacheKey {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        let v = hex::decode(s).ok()?;
        Some(Self(v.try_into().ok()?))
    }

    /// Key for one pipeline's outputs under this query key.
    pub fn for_pipeline(&self, pipeline: usize) -> ResultCacheKey {
        let mut h = Sha256::new();
        h.update(self.0);
        h.update(format!("/pipeline/{pipeline}"));
        ResultCacheKey(h.finalize().into())
    }
}

impl fmt::Display for ResultCacheKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for ResultCacheKey {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for ResultCacheKey {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        ResultCacheKey::from_hex(&s).ok_or_else(|| serde::de::Error::custom("bad cache key"))
    }
}

fn literal(v: &ScalarValue) -> String {
    match v {
        ScalarValue::Null => "null".into(),
        ScalarValue::Int64(x) => format!("n{x}"),
        ScalarValue::Decimal { value, scale } => {
            // Numerically equal decimals render alike.
            let (mut v, mut s) = (*value, *scale);
            while s > 0 && v % 10 == 0 {
                v /= 10;
                s -= 1;
            }
            if s == 0 {
                format!("n{v}")
            } else {
                format!("n{v}e-{s}")
            }
        }
        ScalarValue::Float64(f) => format!("f{:016x}", f.to_bits()),
        ScalarValue::Utf8(s) => format!("s{}:{s}", s.len()),
        ScalarValue::Date(d) => format!("d{d}"),
        ScalarValue::Bool(b) => format!("b{b}"),
    }
}

fn flatten<'a>(e: &'a BoundExpr, op: BinaryOp, out: &mut Vec<&'a BoundExpr>) {
    match e {
        BoundExpr::Binary { op: o, left, right, .. } if *o == op => {
            flatten(left, op, out);
            flatten(right, op, out);
        }
        other => out.push(other),
    }
}

/// Canonical text: AND/OR chains sorted, symmetric operands ordered, `>`
/// rewritten as `<`, literals normalized.
pub fn canonical_expr(e: &BoundExpr) -> String {
    match e {
        BoundExpr::Column { name, .. } => format!("c:{name}"),
        BoundExpr::Literal { value, data_type } => format!("{}:{data_type}", literal(value)),
        BoundExpr::Cast { expr, data_type } => format!("cast({},{data_type})", canonical_expr(expr)),
        BoundExpr::Negative(x) => format!("neg({})", canonical_expr(x)),
        BoundExpr::Not(x) => format!("not({})", canonical_expr(x)),
        BoundExpr::Binary { op, left, right, .. } => {
            let (l, r) = (canonical_expr(left), canonical_expr(right));
            match op {
                BinaryOp::And | BinaryOp::Or => {
                    let mut parts = Vec::new();
                    flatten(e, *op, &mut parts);
                    let mut texts: Vec<String> = parts.into_iter().map(canonical_expr).collect();
                    texts.sort();
                    texts.dedup();
                    format!("{}({})", op.symbol(), texts.join(","))
                }
                BinaryOp::Eq | BinaryOp::NotEq | BinaryOp::Plus | BinaryOp::Multiply => {
                    let (a, b) = if l <= r { (l, r) } else { (r, l) };
                    format!("{}({a},{b})", op.symbol())
                }
                BinaryOp::Gt | BinaryOp::GtEq => format!("{}({r},{l})", op.flip().symbol()),
                _ => format!("{}({l},{r})", op.symbol()),
            }
        }
        BoundExpr::IsNull { expr, negated } => format!("isnull({},{negated})", canonical_expr(expr)),
        BoundExpr::InList { expr, list, negated } => {
            let mut items: Vec<String> = list.iter().map(literal).collect();
            items.sort();
            items.dedup();
            format!("in({},{negated},[{}])", canonical_expr(expr), items.join(","))
        }
        BoundExpr::Case {
            whens, else_expr, ..
        } => {
            let arms: Vec<String> = whens
                .iter()
                .map(|(w, t)| format!("{}=>{}", canonical_expr(w), canonical_expr(t)))
                .collect();
            let e = else_expr.as_deref().map(canonical_expr).unwrap_or_else(|| "null".into());
            format!("case({};{e})", arms.join(";"))
        }
    }
}

pub fn canonical_plan(p: &LogicalPlan) -> String {
    let child = |c: &LogicalPlan| canonical_plan(c);
    match p {
        LogicalPlan::Scan {
            table,
            columns,
            manifest_version,
            ..
        } => format!("scan({table}@{manifest_version};{})", columns.join(",")),
        LogicalPlan::Filter { input, predicate } => {
            format!("filter({};{})", canonical_expr(predicate), child(input))
        }
        LogicalPlan::Project { input, exprs } => {
            let items: Vec<String> = exprs.iter().map(|(e, n)| format!("{}={n}", canonical_expr(e))).collect();
            format!("project({};{})", items.join(","), child(input))
        }
        LogicalPlan::Aggregate {
            input,
            group_by,
            aggregates,
        } => {
            let keys: Vec<String> = group_by.iter().map(|(e, n)| format!("{}={n}", canonical_expr(e))).collect();
            let aggs: Vec<String> = aggregates
                .iter()
                .map(|a| {
                    let arg = a.arg.as_ref().map(canonical_expr).unwrap_or_else(|| "*".into());
                    format!("{:?}({arg})={}:{}", a.func, a.name, a.data_type)
                })
                .collect();
            format!("aggregate({};{};{})", keys.join(","), aggs.join(","), child(input))
        }
        LogicalPlan::Join { left, right, on, .. } => format!(
            "join({};{};{})",
            on.as_ref().map(canonical_expr).unwrap_or_default(),
            child(left),
            child(right)
        ),
        LogicalPlan::Sort { input, keys } => {
            let k: Vec<String> = keys
                .iter()
                .map(|k| format!("{}:{}", canonical_expr(&k.expr), if k.asc { "asc" } else { "desc" }))
                .collect();
            format!("sort({};{})", k.join(","), child(input))
        }
        LogicalPlan::Limit { input, n } => format!("limit({n};{})", child(input)),
        LogicalPlan::Values { schema, rows } => {
            let rows: Vec<String> = rows
                .iter()
                .map(|r| r.iter().map(literal).collect::<Vec<_>>().join(","))
                .collect();
            let cols: Vec<String> = schema.fields.iter().map(|f| format!("{}:{}", f.name, f.data_type)).collect();
            format!("values({};{})", cols.join(","), rows.join("|"))
        }
    }
}

/// Deterministic key for a logically optimized plan.
pub fn cache_key(plan: &LogicalPlan) -> ResultCacheKey {
    let mut h = Sha256::new();
    h.update(b"skylite-plan-v1\n");
    h.update(canonical_plan(plan).as_bytes());
    ResultCacheKey(h.finalize().into())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::optimize_logical;
    use crate::sql::{compile, tpch};
    use crate::storage::{Catalog, Manifest};

    fn catalog(version: &str) -> Catalog {
        let mut c = Catalog::new();
        for ts in [tpch::lineitem_schema(), tpch::orders_schema()] {
            let table = ts.name.clone();
            c.register(
                ts,
                Manifest {
                    table,
                    version: version.into(),
                    objects: vec![],
                },
            );
        }
        c
    }

    fn key(sql: &str, version: &str) -> ResultCacheKey {
        cache_key(&optimize_logical(compile(sql, &catalog(version)).unwrap()))
    }

    #[test]
    fn same_text_same_key_and_new_manifest_changes_it() {
        assert_eq!(key(tpch::Q6, "v1"), key(tpch::Q6, "v1"));
        assert_ne!(key(tpch::Q6, "v1"), key(tpch::Q6, "v2"));
        assert_ne!(key(tpch::Q6, "v1"), key(tpch::Q1, "v1"));
    }

    #[test]
    fn conjunct_order_and_literal_spelling_do_not_matter() {
        let a = key("select l_tax from lineitem where l_tax > 0.10 and l_quantity < 5", "v");
        let b = key("select l_tax from lineitem where l_quantity < 5 and 0.1 < l_tax", "v");
        assert_eq!(a, b);
        let c = key("select l_tax from lineitem where l_quantity < 6 and 0.1 < l_tax", "v");
        assert_ne!(a, c);
    }

    #[test]
    fn hex_roundtrip() {
        let k = key(tpch::Q12, "v1");
        assert_eq!(ResultCacheKey::from_hex(&k.to_hex()), Some(k));
        let json = serde_json::to_string(&k).unwrap();
        assert_eq!(serde_json::from_str::<ResultCacheKey>(&json).unwrap(), k);
        assert_ne!(k.for_pipeline(0), k.for_pipeline(1));
    }
}
