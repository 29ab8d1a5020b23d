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

//! Typed expressions produced by the binder.
//!
//! Column references are by name; names are unique within every plan node's
//! output. Operands of comparisons and arithmetic already share the type the
//! operator works on, with explicit casts inserted where needed.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::ast::BinaryOp;
use crate::storage::types::format_date;
use crate::storage::{DataType, ScalarValue};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundExpr {
    Column {
        name: String,
        data_type: DataType,
    },
    Literal {
        value: ScalarValue,
        data_type: DataType,
    },
    Cast {
        expr: Box<BoundExpr>,
        data_type: DataType,
    },
    Negative(Box<BoundExpr>),
    Not(Box<BoundExpr>),
    Binary {
        op: BinaryOp,
        left: Box<BoundExpr>,
        right: Box<BoundExpr>,
        data_type: DataType,
    },
    IsNull {
        expr: Box<BoundExpr>,
        negated: bool,
    },
    /// Membership in a list of literals of the operand's type.
    InList {
        expr: Box<BoundExpr>,
        list: Vec<ScalarValue>,
        negated: bool,
    },
    /// Searched CASE; a missing ELSE yields NULL.
    Case {
        whens: Vec<(BoundExpr, BoundExpr)>,
        else_expr: Option<Box<BoundExpr>>,
        data_type: DataType,
    },
}

impl BoundExpr {
    pub fn column(name: impl Into<String>, data_type: DataType) -> Self {
        BoundExpr::Column {
            name: name.into(),
            data_type,
        }
    }

    pub fn literal(value: ScalarValue, data_type: DataType) -> Self {
        BoundExpr::Literal { value, data_type }
    }

    pub fn binary(op: BinaryOp, left: BoundExpr, right: BoundExpr, data_type: DataType) -> Self {
        BoundExpr::Binary {
            op,
            left: Box::new(left),
            right: Box::new(right),
            data_type,
        }
    }

    pub fn and(left: BoundExpr, right: BoundExpr) -> Self {
        Self::binary(BinaryOp::And, left, right, DataType::Bool)
    }

    pub fn data_type(&self) -> DataType {
        match self {
            BoundExpr::Column { data_type, .. }
            | BoundExpr::Literal { data_type, .. }
            | BoundExpr::Cast { data_type, .. }
            | BoundExpr::Binary { data_type, .. }
            | BoundExpr::Case { data_type, .. } => *data_type,
            BoundExpr::Negative(e) => e.data_type(),
            BoundExpr::Not(_) | BoundExpr::IsNull { .. } | BoundExpr::InList { .. } => DataType::Bool,
        }
    }

    pub fn children(&self) -> Vec<&BoundExpr> {
        match self {
            BoundExpr::Column { .. } | BoundExpr::Literal { .. } => vec![],
            BoundExpr::Cast { expr, .. }
            | BoundExpr::Negative(expr)
            | BoundExpr::Not(expr)
            | BoundExpr::IsNull { expr, .. }
            | BoundExpr::InList { expr, .. } => vec![expr],
            BoundExpr::Binary { left, right, .. } => vec![left, right],
            BoundExpr::Case { whens, else_expr, .. } => {
                let mut v: Vec<&BoundExpr> = whens.iter().flat_map(|(w, t)| [w, t]).collect();
                if let Some(e) = else_expr {
                    v.push(e);
                }
                v
            }
        }
    }

    /// Rebuilds this node bottom-up, applying `f` to every node after its
    /// children were rewritten.
    pub fn transform(self, f: &mut impl FnMut(BoundExpr) -> BoundExpr) -> BoundExpr {
        let rebuilt = match self {
            e @ (BoundExpr::Column { .. } | BoundExpr::Literal { .. }) => e,
            BoundExpr::Cast { expr, data_type } => BoundExpr::Cast {
                expr: Box::new(expr.transform(f)),
                data_type,
            },
            BoundExpr::Negative(e) => BoundExpr::Negative(Box::new(e.transform(f))),
            BoundExpr::Not(e) => BoundExpr::Not(Box::new(e.transform(f))),
            BoundExpr::Binary {
                op,
                left,
                right,
                data_type,
            } => BoundExpr::Binary {
                op,
                left: Box::new(left.transform(f)),
                right: Box::new(right.transform(f)),
                data_type,
            },
            BoundExpr::IsNull { expr, negated } => BoundExpr::IsNull {
                expr: Box::new(expr.transform(f)),
                negated,
            },
            BoundExpr::InList { expr, list, negated } => BoundExpr::InList {
                expr: Box::new(expr.transform(f)),
                list,
                negated,
            },
            BoundExpr::Case {
                whens,
                else_expr,
                data_type,
            } => BoundExpr::Case {
                whens: whens
                    .into_iter()
                    .map(|(w, t)| (w.transform(f), t.transform(f)))
                    .collect(),
                else_expr: else_expr.map(|e| Box::new(e.transform(f))),
                data_type,
            },
        };
        f(rebuilt)
    }

    pub fn collect_columns(&self, out: &mut BTreeSet<String>) {
        if let BoundExpr::Column { name, .. } = self {
            out.insert(name.clone());
        }
        for c in self.children() {
            c.collect_columns(out);
        }
    }

    pub fn columns(&self) -> BTreeSet<String> {
        let mut s = BTreeSet::new();
        self.collect_columns(&mut s);
        s
    }

    pub fn is_literal(&self) -> bool {
        matches!(self, BoundExpr::Literal { .. })
    }

    /// Splits a conjunction into its conjuncts.
    pub fn conjuncts(&self) -> Vec<BoundExpr> {
        match self {
            BoundExpr::Binary {
                op: BinaryOp::And,
                left,
                right,
                ..
            } => {
                let mut v = left.conjuncts();
                v.extend(right.conjuncts());
                v
            }
            other => vec![other.clone()],
        }
    }

    /// Left-deep conjunction; `None` for an empty list.
    pub fn conjunction(parts: impl IntoIterator<Item = BoundExpr>) -> Option<BoundExpr> {
        parts.into_iter().reduce(BoundExpr::and)
    }
}

fn write_literal(f: &mut fmt::Formatter<'_>, v: &ScalarValue) -> fmt::Result {
    match v {
        ScalarValue::Utf8(s) => write!(f, "'{}'", s.replace('\'', "''")),
        ScalarValue::Date(d) => write!(f, "date '{}'", format_date(*d)),
        other => write!(f, "{other}"),
    }
}

impl fmt::Display for BoundExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundExpr::Column { name, .. } => f.write_str(name),
            BoundExpr::Literal { value, .. } => write_literal(f, value),
            BoundExpr::Cast { expr, data_type } => write!(f, "cast({expr} as {data_type})"),
            BoundExpr::Negative(e) => write!(f, "(- {e})"),
            BoundExpr::Not(e) => write!(f, "(not {e})"),
            BoundExpr::Binary { op, left, right, .. } => write!(f, "({left} {} {right})", op.symbol()),
            BoundExpr::IsNull { expr, negated } => {
                write!(f, "({expr} is {}null)", if *negated { "not " } else { "" })
            }
            BoundExpr::InList { expr, list, negated } => {
                write!(f, "({expr} {}in (", if *negated { "not " } else { "" })?;
                for (i, v) in list.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write_literal(f, v)?;
                }
                f.write_str("))")
            }
            BoundExpr::Case { whens, else_expr, .. } => {
                f.write_str("case")?;
                for (w, t) in whens {
                    write!(f, " when {w} then {t}")?;
                }
                if let Some(e) = else_expr {
                    write!(f, " else {e}")?;
                }
                f.write_str(" end")
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggFunc {
    Sum,
    Avg,
    Count,
    CountStar,
    Min,
    Max,
}

impl AggFunc {
    pub fn name(self) -> &'static str {
        match self {
            AggFunc::Sum => "sum",
            AggFunc::Avg => "avg",
            AggFunc::Count | AggFunc::CountStar => "count",
            AggFunc::Min => "min",
            AggFunc::Max => "max",
        }
    }
}

/// Scale of averages over exact numerics.
pub const AVG_SCALE: u8 = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateExpr {
    pub func: AggFunc,
    /// `None` only for `count(*)`.
    pub arg: Option<BoundExpr>,
    /// Output column name.
    pub name: String,
    pub data_type: DataType,
}

impl AggregateExpr {
    /// Result type of `func` over an argument of type `arg`.
    pub fn result_type(func: AggFunc, arg: Option<DataType>) -> Option<DataType> {
        Some(match (func, arg) {
            (AggFunc::Count | AggFunc::CountStar, _) => DataType::Int64,
            (AggFunc::Sum, Some(DataType::Int64)) => DataType::Int64,
            (AggFunc::Sum, Some(DataType::Float64)) | (AggFunc::Avg, Some(DataType::Float64)) => DataType::Float64,
            (AggFunc::Sum, Some(DataType::Decimal { scale, .. })) => DataType::decimal(18, scale),
            (AggFunc::Avg, Some(DataType::Int64 | DataType::Decimal { .. })) => DataType::decimal(18, AVG_SCALE),
            (AggFunc::Min | AggFunc::Max, Some(t)) => t,
            _ => return None,
        })
    }

    /// Display form without the output name, e.g. `sum(l_quantity)`.
    pub fn call_text(&self) -> String {
        match &self.arg {
            None => "count(*)".into(),
            Some(a) => format!("{}({a})", self.func.name()),
        }
    }
}

impl fmt::Display for AggregateExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} as {}", self.call_text(), self.name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SortKey {
    pub expr: BoundExpr,
    pub asc: bool,
}

impl fmt::Display for SortKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.expr, if self.asc { "asc" } else { "desc" })
    }
}
