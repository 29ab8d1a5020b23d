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

//! Push-based operators over record batches.
//!
//! Each operator receives batches through [`Operator::push`] and emits zero
//! or more batches downstream; [`Operator::finish`] flushes state once the
//! input is exhausted. Pipeline breakers (aggregation, sort) emit only on
//! finish.

use std::cmp::Ordering;
use std::sync::Arc;

use thiserror::Error;

use super::agg::HashAggregate;
use super::eval::{evaluate, selection, EvalError};
use super::join::HashJoin;
use crate::optimizer::PhysicalOp;
use crate::sql::SortKey;
use crate::storage::types::compare_values;
use crate::storage::{
    Column, ColumnData, FormatError, ReadError, RecordBatch, Schema, SchemaRef,
    TypeError,
};

/// How the coordinator reacts to a failed fragment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureClass {
    /// Deterministic failure; retrying cannot help.
    CodeError,
    /// Input too large for one worker; split and reassign.
    DataSkew,
    /// Infrastructure failure; retrigger.
    Transient,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExecError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("type error: {0}")]
    Type(#[from] TypeError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Read(#[from] ReadError),
    #[error("memory budget exceeded: {needed} bytes needed, budget {budget}")]
    OutOfBudget { needed: u64, budget: u64 },
    #[error("malformed request: {0}")]
    Malformed(String),
    #[error("storage request failed: {0}")]
    Storage(String),
}

impl ExecError {
    pub fn class(&self) -> FailureClass {
        match self {
            ExecError::OutOfBudget { .. } => FailureClass::DataSkew,
            ExecError::Read(ReadError::FetchFailed { .. }) | ExecError::Storage(_) => FailureClass::Transient,
            _ => FailureClass::CodeError,
        }
    }
}

/// Approximate in-memory size of a batch, used for budget checks.
pub fn batch_bytes(b: &RecordBatch) -> u64 {
    b.columns.iter().map(column_bytes).sum()
}

pub fn column_bytes(c: &Column) -> u64 {
    let data = match &c.data {
        ColumnData::Utf8(v) => v.iter().map(|s| s.len() as u64 + 24).sum(),
        other => other.len() as u64 * c.data_type.fixed_width().unwrap_or(8) as u64,
    };
    data + c.validity.as_ref().map_or(0, |v| v.len() as u64)
}

/// Counters that feed the deterministic compute-time model.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpCounters {
    pub rows_in: u64,
    /// Row-aggregate updates, counted separately because they dominate
    /// aggregation cost.
    pub agg_updates: u64,
}

pub trait Operator: Send {
    fn push(&mut self, batch: RecordBatch, out: &mut Vec<RecordBatch>) -> Result<(), ExecError>;
    fn finish(&mut self, _out: &mut Vec<RecordBatch>) -> Result<(), ExecError> {
        Ok(())
    }
    fn counters(&self) -> OpCounters;
}

pub struct Filter {
    predicate: crate::sql::BoundExpr,
    counters: OpCounters,
}

impl Operator for Filter {
    fn push(&mut self, batch: RecordBatch, out: &mut Vec<RecordBatch>) -> Result<(), ExecError> {
        self.counters.rows_in += batch.num_rows() as u64;
        let sel = selection(&self.predicate, &batch)?;
        if sel.len() == batch.num_rows() {
            out.push(batch);
        } else if !sel.is_empty() {
            out.push(batch.take(&sel));
        }
        Ok(())
    }

    fn counters(&self) -> OpCounters {
        self.counters
    }
}

pub struct Project {
    exprs: Vec<crate::sql::BoundExpr>,
    schema: SchemaRef,
    counters: OpCounters,
}

impl Operator for Project {
    fn push(&mut self, batch: RecordBatch, out: &mut Vec<RecordBatch>) -> Result<(), ExecError> {
        let rows = batch.num_rows();
        self.counters.rows_in += rows as u64;
        let cols = self
            .exprs
            .iter()
            .map(|e| evaluate(e, &batch))
            .collect::<Result<Vec<_>, _>>()?;
        out.push(RecordBatch::with_rows(self.schema.clone(), cols, rows)?);
        Ok(())
    }

    fn counters(&self) -> OpCounters {
        self.counters
    }
}

/// Orders rows by `keys`; NULLs sort first ascending. Ties keep input order.
pub struct Sort {
    keys: Vec<SortKey>,
    schema: SchemaRef,
    buffered: Vec<RecordBatch>,
    bytes: u64,
    budget: u64,
    batch_rows: usize,
    counters: OpCounters,
}

pub fn sort_indices(keys: &[SortKey], batch: &RecordBatch) -> Result<Vec<usize>, ExecError> {
    let cols = keys
        .iter()
        .map(|k| evaluate(&k.expr, batch))
        .collect::<Result<Vec<_>, _>>()?;
    let mut idx: Vec<usize> = (0..batch.num_rows()).collect();
    idx.sort_by(|&a, &b| {
        for (c, k) in cols.iter().zip(keys) {
            let o = compare_values(&c.value(a), &c.value(b));
            let o = if k.asc { o } else { o.reverse() };
            if o != Ordering::Equal {
                return o;
            }
        }
        Ordering::Equal
    });
    Ok(idx)
}

impl Operator for Sort {
    fn push(&mut self, batch: RecordBatch, _out: &mut Vec<RecordBatch>) -> Result<(), ExecError> {
        self.counters.rows_in += batch.num_rows() as u64;
        self.bytes += batch_bytes(&batch);
        if self.bytes > self.budget {
            return Err(ExecError::OutOfBudget {
                needed: self.bytes,
                budget: self.budget,
            });
        }
        self.buffered.push(batch);
        Ok(())
    }

    fn finish(&mut self, out: &mut Vec<RecordBatch>) -> Result<(), ExecError> {
        let all = RecordBatch::concat(self.schema.clone(), &std::mem::take(&mut self.buffered));
        let idx = sort_indices(&self.keys, &all)?;
        for chunk in idx.chunks(self.batch_rows.max(1)) {
            out.push(all.take(chunk));
        }
        Ok(())
    }

    fn counters(&self) -> OpCounters {
        self.counters
    }
}

pub struct Limit {
    remaining: u64,
    counters: OpCounters,
}

impl Operator for Limit {
    fn push(&mut self, batch: RecordBatch, out: &mut Vec<RecordBatch>) -> Result<(), ExecError> {
        self.counters.rows_in += batch.num_rows() as u64;
        if self.remaining == 0 {
            return Ok(());
        }
        let n = (batch.num_rows() as u64).min(self.remaining);
        self.remaining -= n;
        out.push(if n as usize == batch.num_rows() {
            batch
        } else {
            batch.slice(0, n as usize)
        });
        Ok(())
    }

    fn counters(&self) -> OpCounters {
        self.counters
    }
}

/// Settings operators need from the worker.
#[derive(Debug, Clone, Copy)]
pub struct OpContext {
    pub memory_budget: u64,
    pub batch_rows: usize,
}

/// Instantiates `op` over input `schema`. Hash joins take their already
/// loaded build side from `build`.
pub fn build_operator(
    op: &PhysicalOp,
    input: &Schema,
    ctx: OpContext,
    build: Option<Vec<RecordBatch>>,
) -> Result<Box<dyn Operator>, ExecError> {
    let schema = Arc::new(op.output_schema(input));
    Ok(match op {
        PhysicalOp::Filter { predicate } => Box::new(Filter {
            predicate: predicate.clone(),
            counters: OpCounters::default(),
        }),
        PhysicalOp::Project { exprs } => Box::new(Project {
            exprs: exprs.iter().map(|(e, _)| e.clone()).collect(),
            schema,
            counters: OpCounters::default(),
        }),
        PhysicalOp::HashAggregate {
            mode,
            group_by,
            aggregates,
        } => Box::new(HashAggregate::new(*mode, group_by, aggregates, schema, ctx)?),
        PhysicalOp::HashJoin {
            build_keys,
            probe_keys,
            build_side,
            build_schema,
            ..
        } => {
            let batches = build.ok_or_else(|| ExecError::Malformed("hash join without build input".into()))?;
            Box::new(HashJoin::new(
                build_schema,
                batches,
                build_keys,
                probe_keys,
                *build_side,
                schema,
                ctx,
            )?)
        }
        PhysicalOp::Sort { keys } => Box::new(Sort {
            keys: keys.clone(),
            schema,
            buffered: vec![],
            bytes: 0,
            budget: ctx.memory_budget,
            batch_rows: ctx.batch_rows,
            counters: OpCounters::default(),
        }),
        PhysicalOp::Limit { n } => Box::new(Limit {
            remaining: *n,
            counters: OpCounters::default(),
        }),
    })
}

/// A chain of operators; batches pushed in come out of the last operator.
pub struct Chain {
    ops: Vec<Box<dyn Operator>>,
}

impl Chain {
    pub fn new(ops: Vec<Box<dyn Operator>>) -> Self {
        Self { ops }
    }

    fn run_from(&mut self, start: usize, batches: Vec<RecordBatch>, sink: &mut dyn FnMut(RecordBatch) -> Result<(), ExecError>) -> Result<(), ExecError> {
        let mut current = batches;
        for op in &mut self.ops[start..] {
            let mut next = Vec::new();
            for b in current {
                op.push(b, &mut next)?;
            }
            current = next;
            if current.is_empty() {
                return Ok(());
            }
        }
        for b in current {
            sink(b)?;
        }
        Ok(())
    }

    pub fn push(&mut self, batch: RecordBatch, sink: &mut dyn FnMut(RecordBatch) -> Result<(), ExecError>) -> Result<(), ExecError> {
        self.run_from(0, vec![batch], sink)
    }

    /// Flushes operators front to back so each sees its upstream's tail.
    pub fn finish(&mut self, sink: &mut dyn FnMut(RecordBatch) -> Result<(), ExecError>) -> Result<(), ExecError> {
        for i in 0..self.ops.len() {
            let mut out = Vec::new();
            self.ops[i].finish(&mut out)?;
            self.run_from(i + 1, out, sink)?;
        }
        Ok(())
    }

    pub fn counters(&self) -> OpCounters {
        self.ops.iter().fold(OpCounters::default(), |a, o| {
            let c = o.counters();
            OpCounters {
                rows_in: a.rows_in + c.rows_in,
                agg_updates: a.agg_updates + c.agg_updates,
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sql::BoundExpr;
    use crate::storage::{DataType, Field, ScalarValue as S};

    fn batch(vals: &[Option<i64>]) -> RecordBatch {
        let schema = Arc::new(Schema::new(vec![
            Field::new("k", DataType::Int64, true),
            Field::new("pos", DataType::Int64, false),
        ]));
        let rows: Vec<Vec<S>> = vals
            .iter()
            .enumerate()
            .map(|(i, v)| vec![v.map_or(S::Null, S::Int64), S::Int64(i as i64)])
            .collect();
        RecordBatch::from_rows(schema, &rows).unwrap()
    }

    fn ctx() -> OpContext {
        OpContext {
            memory_budget: 1 << 30,
            batch_rows: 2,
        }
    }

    fn col(b: &RecordBatch, i: usize) -> Vec<S> {
        (0..b.num_rows()).map(|r| b.columns[i].value(r)).collect()
    }

    #[test]
    fn sort_is_stable_with_nulls_first() {
        let b = batch(&[Some(2), None, Some(1), Some(2), None]);
        let keys = vec![SortKey {
            expr: BoundExpr::column("k", DataType::Int64),
            asc: true,
        }];
        let mut op = build_operator(&PhysicalOp::Sort { keys }, &b.schema, ctx(), None).unwrap();
        let mut out = vec![];
        op.push(b.clone(), &mut out).unwrap();
        assert!(out.is_empty());
        op.finish(&mut out).unwrap();
        assert_eq!(out.len(), 3, "re-batched at batch_rows");
        let all = RecordBatch::concat(b.schema.clone(), &out);
        assert_eq!(col(&all, 1), [1, 4, 2, 0, 3].map(S::Int64).to_vec());
    }

    #[test]
    fn limit_and_filter_chain() {
        let b = batch(&[Some(5), Some(1), Some(7), Some(9)]);
        let pred = BoundExpr::binary(
            crate::sql::BinaryOp::Gt,
            BoundExpr::column("k", DataType::Int64),
            BoundExpr::literal(S::Int64(4), DataType::Int64),
            DataType::Bool,
        );
        let ops = vec![
            build_operator(&PhysicalOp::Filter { predicate: pred }, &b.schema, ctx(), None).unwrap(),
            build_operator(&PhysicalOp::Limit { n: 2 }, &b.schema, ctx(), None).unwrap(),
        ];
        let mut chain = Chain::new(ops);
        let mut got = vec![];
        chain.push(b.clone(), &mut |x| Ok(got.push(x))).unwrap();
        chain.push(b, &mut |x| Ok(got.push(x))).unwrap();
        chain.finish(&mut |x| Ok(got.push(x))).unwrap();
        let rows: usize = got.iter().map(|b| b.num_rows()).sum();
        assert_eq!(rows, 2);
        assert_eq!(col(&got[0], 0), vec![S::Int64(5), S::Int64(7)]);
        assert_eq!(chain.counters().rows_in, 8 + 6);
    }

    #[test]
    fn sort_over_budget_signals_skew() {
        let b = batch(&[Some(1); 100]);
        let c = OpContext {
            memory_budget: 64,
            batch_rows: 10,
        };
        let keys = vec![];
        let mut op = build_operator(&PhysicalOp::Sort { keys }, &b.schema, c, None).unwrap();
        let err = op.push(b, &mut vec![]).unwrap_err();
        assert_eq!(err.class(), FailureClass::DataSkew);
    }
}
