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

//! SQL frontend: tokenizer, parser, syntax tree and the binder that turns a
//! query into a typed logical plan.

pub mod ast;
pub mod bind;
pub mod expr;
pub mod lexer;
pub mod parser;
pub mod plan;
pub mod tpch;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::storage::CatalogError;

pub use ast::{BinaryOp, Query};
pub use bind::bind;
pub use expr::{AggFunc, AggregateExpr, BoundExpr, SortKey};
pub use parser::{parse, parse_expr};
pub use plan::{JoinSide, LogicalPlan};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SqlError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("not supported: {0}")]
    NotSupported(String),
    #[error("unknown table {0}")]
    UnknownTable(String),
    #[error("unknown column {0}")]
    UnknownColumn(String),
    #[error("ambiguous column {0}")]
    AmbiguousColumn(String),
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("column {0} must appear in GROUP BY or inside an aggregate")]
    UngroupedColumn(String),
    #[error("invalid aggregate use: {0}")]
    InvalidAggregate(String),
    #[error("invalid literal: {0}")]
    InvalidLiteral(String),
}

impl SqlError {
    pub fn syntax(offset: usize, message: impl Into<String>) -> Self {
        SqlError::Syntax {
            offset,
            message: message.into(),
        }
    }
}

impl From<CatalogError> for SqlError {
    fn from(e: CatalogError) -> Self {
        match e {
            CatalogError::UnknownTable(t) => SqlError::UnknownTable(t),
            other => SqlError::UnknownTable(other.to_string()),
        }
    }
}

/// The JSON request envelope accepted by the query endpoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRequest {
    pub query: String,
}

impl QueryRequest {
    pub fn new(query: impl Into<String>) -> Self {
        Self { query: query.into() }
    }

    pub fn from_json(text: &str) -> Result<Self, SqlError> {
        serde_json::from_str(text).map_err(|e| SqlError::syntax(0, format!("malformed request envelope: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("request serializes")
    }
}

/// Parses and binds in one step.
pub fn compile(sql: &str, catalog: &crate::storage::Catalog) -> Result<LogicalPlan, SqlError> {
    bind(&parse(sql)?, catalog)
}
