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

//! Logical plan tree.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::expr::{AggFunc, AggregateExpr, BoundExpr, SortKey};
use crate::storage::{Field, ScalarValue, Schema};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JoinSide {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogicalPlan {
    /// Reads `columns` of a catalog table; `schema` is their projection.
    Scan {
        table: String,
        columns: Vec<String>,
        schema: Schema,
        table_bytes: u64,
        manifest_version: String,
    },
    Filter {
        input: Box<LogicalPlan>,
        predicate: BoundExpr,
    },
    Project {
        input: Box<LogicalPlan>,
        exprs: Vec<(BoundExpr, String)>,
    },
    /// Output columns are the group keys followed by the aggregates.
    Aggregate {
        input: Box<LogicalPlan>,
        group_by: Vec<(BoundExpr, String)>,
        aggregates: Vec<AggregateExpr>,
    },
    /// Inner join; output columns are left's followed by right's. A missing
    /// condition means a cross product.
    Join {
        left: Box<LogicalPlan>,
        right: Box<LogicalPlan>,
        on: Option<BoundExpr>,
        build: JoinSide,
    },
    Sort {
        input: Box<LogicalPlan>,
        keys: Vec<SortKey>,
    },
    Limit {
        input: Box<LogicalPlan>,
        n: u64,
    },
    Values {
        schema: Schema,
        rows: Vec<Vec<ScalarValue>>,
    },
}

impl LogicalPlan {
    pub fn schema(&self) -> Schema {
        match self {
            LogicalPlan::Scan { schema, .. } | LogicalPlan::Values { schema, .. } => schema.clone(),
            LogicalPlan::Filter { input, .. }
            | LogicalPlan::Sort { input, .. }
            | LogicalPlan::Limit { input, .. } => input.schema(),
            LogicalPlan::Project { exprs, .. } => Schema::new(
                exprs
                    .iter()
                    .map(|(e, n)| Field::new(n.clone(), e.data_type(), true))
                    .collect(),
            ),
            LogicalPlan::Aggregate {
                group_by, aggregates, ..
            } => {
                let mut fields: Vec<Field> = group_by
                    .iter()
                    .map(|(e, n)| Field::new(n.clone(), e.data_type(), true))
                    .collect();
                fields.extend(aggregates.iter().map(|a| {
                    let nullable = !matches!(a.func, AggFunc::Count | AggFunc::CountStar);
                    Field::new(a.name.clone(), a.data_type, nullable)
                }));
                Schema::new(fields)
            }
            LogicalPlan::Join { left, right, .. } => {
                let mut fields = left.schema().fields;
                fields.extend(right.schema().fields);
                Schema::new(fields)
            }
        }
    }

    pub fn inputs(&self) -> Vec<&LogicalPlan> {
        match self {
            LogicalPlan::Scan { .. } | LogicalPlan::Values { .. } => vec![],
            LogicalPlan::Filter { input, .. }
            | LogicalPlan::Project { input, .. }
            | LogicalPlan::Aggregate { input, .. }
            | LogicalPlan::Sort { input, .. }
            | LogicalPlan::Limit { input, .. } => vec![input],
            LogicalPlan::Join { left, right, .. } => vec![left, right],
        }
    }

    /// Operator name, e.g. `Scan`.
    pub fn kind(&self) -> &'static str {
        match self {
            LogicalPlan::Scan { .. } => "Scan",
            LogicalPlan::Filter { .. } => "Filter",
            LogicalPlan::Project { .. } => "Project",
            LogicalPlan::Aggregate { .. } => "Aggregate",
            LogicalPlan::Join { .. } => "Join",
            LogicalPlan::Sort { .. } => "Sort",
            LogicalPlan::Limit { .. } => "Limit",
            LogicalPlan::Values { .. } => "Values",
        }
    }

    /// Every scanned table, left to right.
    pub fn scans(&self) -> Vec<&LogicalPlan> {
        let mut out = Vec::new();
        fn walk<'a>(p: &'a LogicalPlan, out: &mut Vec<&'a LogicalPlan>) {
            if let LogicalPlan::Scan { .. } = p {
                out.push(p);
            }
            for i in p.inputs() {
                walk(i, out);
            }
        }
        walk(self, &mut out);
        out
    }

    fn fmt_indent(&self, f: &mut fmt::Formatter<'_>, depth: usize) -> fmt::Result {
        let pad = "  ".repeat(depth);
        match self {
            LogicalPlan::Scan { table, columns, .. } => {
                writeln!(f, "{pad}Scan {table} [{}]", columns.join(", "))?
            }
            LogicalPlan::Filter { predicate, .. } => writeln!(f, "{pad}Filter {predicate}")?,
            LogicalPlan::Project { exprs, .. } => {
                let items: Vec<String> = exprs.iter().map(|(e, n)| format!("{e} as {n}")).collect();
                writeln!(f, "{pad}Project [{}]", items.join(", "))?
            }
            LogicalPlan::Aggregate {
                group_by, aggregates, ..
            } => {
                let keys: Vec<String> = group_by.iter().map(|(e, n)| format!("{e} as {n}")).collect();
                let aggs: Vec<String> = aggregates.iter().map(|a| a.to_string()).collect();
                writeln!(f, "{pad}Aggregate keys=[{}] aggs=[{}]", keys.join(", "), aggs.join(", "))?
            }
            LogicalPlan::Join { on, build, .. } => match on {
                Some(c) => writeln!(f, "{pad}Join on {c} build={build:?}")?,
                None => writeln!(f, "{pad}Join cross build={build:?}")?,
            },
            LogicalPlan::Sort { keys, .. } => {
                let k: Vec<String> = keys.iter().map(|k| k.to_string()).collect();
                writeln!(f, "{pad}Sort [{}]", k.join(", "))?
            }
            LogicalPlan::Limit { n, .. } => writeln!(f, "{pad}Limit {n}")?,
            LogicalPlan::Values { rows, .. } => writeln!(f, "{pad}Values rows={}", rows.len())?,
        }
        for i in self.inputs() {
            i.fmt_indent(f, depth + 1)?;
        }
        Ok(())
    }
}

impl fmt::Display for LogicalPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_indent(f, 0)
    }
}
