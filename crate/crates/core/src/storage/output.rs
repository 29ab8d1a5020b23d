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

//! Output handler: buffers a worker's result batches into one columnar
//! object and writes it with a single put.

use serde::{Deserialize, Serialize};

use super::format::{FileWriter, FormatError, WriteOptions};
use super::types::{RecordBatch, SchemaRef};
use crate::sim::{SimError, SimTime, Simulator, StorageClass};

/// Deterministic key of one output object.
pub fn output_key(query_id: &str, pipeline: u32, fragment: &str, partition: u32) -> String {
    format!("q/{query_id}/p{pipeline}/f{fragment}/part{partition}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputReceipt {
    pub bucket: String,
    pub key: String,
    pub bytes: u64,
    pub rows: u64,
    pub requests: u32,
    pub completed_at: SimTime,
}

pub struct OutputHandle {
    bucket: String,
    key: String,
    class: StorageClass,
    writer: FileWriter,
}

impl OutputHandle {
    pub fn new(
        bucket: impl Into<String>,
        key: impl Into<String>,
        schema: SchemaRef,
        class: StorageClass,
        options: WriteOptions,
    ) -> Result<Self, FormatError> {
        Ok(Self {
            bucket: bucket.into(),
            key: key.into(),
            class,
            writer: FileWriter::new(schema, options)?,
        })
    }

    pub fn key(&self) -> &str {
        &self.key
    }

    pub fn append(&mut self, batch: &RecordBatch) -> Result<(), FormatError> {
        self.writer.write(batch)
    }

    pub fn rows(&self) -> u64 {
        self.writer.rows_written()
    }

    /// Serializes the buffered rows and writes them as one object, retrying
    /// injected request failures up to `max_attempts` puts.
    pub fn finalize(
        self,
        sim: &Simulator,
        at: SimTime,
        max_attempts: u32,
    ) -> Result<OutputReceipt, SimError> {
        let rows = self.writer.rows_written();
        let bytes = bytes::Bytes::from(self.writer.finish());
        let mut t = at;
        let mut requests = 0;
        loop {
            requests += 1;
            match sim.put_object(&self.bucket, &self.key, bytes.clone(), self.class, t) {
                Ok(r) => {
                    return Ok(OutputReceipt {
                        bucket: self.bucket,
                        key: self.key,
                        bytes: bytes.len() as u64,
                        rows,
                        requests,
                        completed_at: r.completed_at,
                    })
                }
                Err(SimError::RequestFailed { at }) if requests < max_attempts => t = at,
                Err(e) => return Err(e),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::sim::SimConfig;
    use crate::storage::format::read_file;
    use crate::storage::types::{DataType, Field, ScalarValue, Schema};

    fn batch(n: i64) -> RecordBatch {
        let schema = Arc::new(Schema::new(vec![Field::new("x", DataType::Int64, false)]));
        let rows: Vec<_> = (0..n).map(|i| vec![ScalarValue::Int64(i)]).collect();
        RecordBatch::from_rows(schema, &rows).unwrap()
    }

    fn finalize(sim: &Simulator, batches: &[RecordBatch]) -> OutputReceipt {
        let key = output_key("q1", 0, "3", 1);
        let mut h = OutputHandle::new(
            "tmp",
            key,
            batch(0).schema.clone(),
            StorageClass::Standard,
            WriteOptions::default(),
        )
        .unwrap();
        for b in batches {
            h.append(b).unwrap();
        }
        h.finalize(sim, 0, 4).unwrap()
    }

    #[test]
    fn repeated_finalize_is_idempotent() {
        let sim = Simulator::new(SimConfig::default());
        let a = finalize(&sim, &[batch(10)]);
        let first = sim.peek_object("tmp", &a.key).unwrap().bytes;
        let b = finalize(&sim, &[batch(10)]);
        assert_eq!(a.key, b.key);
        assert_eq!(first, sim.peek_object("tmp", &b.key).unwrap().bytes);
        assert_eq!(a.key, "q/q1/p0/f3/part1");
    }

    #[test]
    fn empty_output_is_valid_file() {
        let sim = Simulator::new(SimConfig::default());
        let r = finalize(&sim, &[]);
        let obj = sim.peek_object("tmp", &r.key).unwrap();
        let (footer, batches) = read_file(&obj.bytes).unwrap();
        assert_eq!(footer.total_rows(), 0);
        assert!(batches.is_empty());
    }

    #[test]
    fn appends_accumulate() {
        let sim = Simulator::new(SimConfig::default());
        let b = batch(4096);
        let r = finalize(&sim, &[b.clone(), b.clone(), b]);
        assert_eq!(r.rows, 12_288);
        let obj = sim.peek_object("tmp", &r.key).unwrap();
        assert_eq!(read_file(&obj.bytes).unwrap().0.total_rows(), 12_288);
        assert_eq!(
            sim.ledger().quantity(crate::sim::CostCategory::RequestsWrite),
            1.0
        );
    }
}
