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

//! Inner hash join. The build side is loaded whole; probe batches stream.

use std::collections::HashMap;
use std::sync::Arc;

use super::eval::evaluate;
use super::ops::{batch_bytes, ExecError, OpContext, OpCounters, Operator};
use crate::sql::{BoundExpr, JoinSide};
use crate::storage::{RecordBatch, ScalarValue, Schema, SchemaRef};

pub struct HashJoin {
    build: RecordBatch,
    /// Build rows per key, in build input order. Keys with a NULL are absent.
    table: HashMap<Vec<ScalarValue>, Vec<u32>>,
    probe_keys: Vec<BoundExpr>,
    build_side: JoinSide,
    schema: SchemaRef,
    counters: OpCounters,
}

impl HashJoin {
    pub fn new(
        build_schema: &Schema,
        batches: Vec<RecordBatch>,
        build_keys: &[BoundExpr],
        probe_keys: &[BoundExpr],
        build_side: JoinSide,
        schema: SchemaRef,
        ctx: OpContext,
    ) -> Result<Self, ExecError> {
        let build = RecordBatch::concat(Arc::new(build_schema.clone()), &batches);
        let needed = batch_bytes(&build) + build.num_rows() as u64 * 48;
        if needed > ctx.memory_budget {
            return Err(ExecError::OutOfBudget {
                needed,
                budget: ctx.memory_budget,
            });
        }
        let key_cols = build_keys
            .iter()
            .map(|e| evaluate(e, &build))
            .collect::<Result<Vec<_>, _>>()?;
        let mut table: HashMap<Vec<ScalarValue>, Vec<u32>> = HashMap::new();
        for i in 0..build.num_rows() {
            let key: Vec<ScalarValue> = key_cols.iter().map(|c| c.value(i)).collect();
            if key.iter().any(ScalarValue::is_null) {
                continue;
            }
            table.entry(key).or_default().push(i as u32);
        }
        let counters = OpCounters {
            rows_in: build.num_rows() as u64,
            agg_updates: 0,
        };
        Ok(Self {
            build,
            table,
            probe_keys: probe_keys.to_vec(),
            build_side,
            schema,
            counters,
        })
    }
}

impl Operator for HashJoin {
    fn push(&mut self, batch: RecordBatch, out: &mut Vec<RecordBatch>) -> Result<(), ExecError> {
        let rows = batch.num_rows();
        self.counters.rows_in += rows as u64;
        let key_cols = self
            .probe_keys
            .iter()
            .map(|e| evaluate(e, &batch))
            .collect::<Result<Vec<_>, _>>()?;
        let (mut probe_idx, mut build_idx) = (Vec::new(), Vec::new());
        for i in 0..rows {
            let key: Vec<ScalarValue> = key_cols.iter().map(|c| c.value(i)).collect();
            if let Some(matches) = self.table.get(&key) {
                for &b in matches {
                    probe_idx.push(i);
                    build_idx.push(b as usize);
                }
            }
        }
        if probe_idx.is_empty() {
            return Ok(());
        }
        let p = batch.take(&probe_idx);
        let b = self.build.take(&build_idx);
        let (l, r) = match self.build_side {
            JoinSide::Left => (b, p),
            JoinSide::Right => (p, b),
        };
        let mut cols = l.columns;
        cols.extend(r.columns);
        out.push(RecordBatch::with_rows(self.schema.clone(), cols, probe_idx.len())?);
        Ok(())
    }

    fn counters(&self) -> OpCounters {
        self.counters
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::storage::{DataType, Field};

    type S = ScalarValue;

    fn table(name: &str, rows: &[(Option<i64>, i64)]) -> RecordBatch {
        let schema = Arc::new(Schema::new(vec![
            Field::new(format!("{name}_k"), DataType::Int64, true),
            Field::new(format!("{name}_v"), DataType::Int64, false),
        ]));
        let rows: Vec<Vec<S>> = rows.iter().map(|(k, v)| vec![k.map_or(S::Null, S::Int64), S::Int64(*v)]).collect();
        RecordBatch::from_rows(schema, &rows).unwrap()
    }

    #[test]
    fn joins_duplicates_and_skips_nulls() {
        let build = table("b", &[(Some(1), 10), (Some(1), 11), (None, 12), (Some(2), 13)]);
        let probe = table("p", &[(Some(1), 0), (None, 1), (Some(3), 2), (Some(2), 3)]);
        let mut fields = build.schema.fields.clone();
        fields.extend(probe.schema.fields.clone());
        let schema = Arc::new(Schema::new(fields));
        let mut j = HashJoin::new(
            &build.schema,
            vec![build.clone()],
            &[BoundExpr::column("b_k", DataType::Int64)],
            &[BoundExpr::column("p_k", DataType::Int64)],
            JoinSide::Left,
            schema,
            OpContext {
                memory_budget: 1 << 20,
                batch_rows: 1024,
            },
        )
        .unwrap();
        let mut out = vec![];
        j.push(probe, &mut out).unwrap();
        let rows: Vec<Vec<S>> = (0..out[0].num_rows()).map(|i| out[0].row(i)).collect();
        assert_eq!(
            rows,
            vec![
                vec![S::Int64(1), S::Int64(10), S::Int64(1), S::Int64(0)],
                vec![S::Int64(1), S::Int64(11), S::Int64(1), S::Int64(0)],
                vec![S::Int64(2), S::Int64(13), S::Int64(2), S::Int64(3)],
            ]
        );
    }
}
