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

//! Footer-driven reading: tail probe, range planning with row-group pruning,
//! and lazy decoding of fetched chunks.

use std::cmp::Ordering;
use std::sync::Arc;

use bytes::Bytes;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::format::{self, Footer, FormatError, MAGIC, TRAILER_LEN};
use super::types::{compare_values, RecordBatch, ScalarValue, Schema, SchemaRef, DEFAULT_BATCH_ROWS};
use crate::sim::{ByteRange, SimError, SimTime, Simulator};

pub const DEFAULT_TAIL_PROBE: u64 = 64 * 1024;
pub const DEFAULT_MAX_REQUEST_BYTES: u64 = 16 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReadError {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("fetch of {bucket}/{key} failed: {reason}")]
    FetchFailed {
        bucket: String,
        key: String,
        reason: String,
    },
}

impl ReadError {
    pub fn fetch_failed(bucket: &str, key: &str, err: &SimError) -> Self {
        ReadError::FetchFailed {
            bucket: bucket.into(),
            key: key.into(),
            reason: err.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ObjectRef {
    pub bucket: String,
    pub key: String,
}

impl ObjectRef {
    pub fn new(bucket: impl Into<String>, key: impl Into<String>) -> Self {
        Self {
            bucket: bucket.into(),
            key: key.into(),
        }
    }
}

/// Footer plus the probe bytes, which later range reads may reuse.
#[derive(Debug, Clone)]
pub struct FooterRead {
    pub footer: Footer,
    pub file_size: u64,
    pub probe: Bytes,
    pub probe_offset: u64,
    pub completed_at: SimTime,
    pub requests: u32,
}

/// Issues one request, retrying injected failures up to `max_attempts`.
fn get_with_retry(
    sim: &Simulator,
    obj: &ObjectRef,
    range: ByteRange,
    mut at: SimTime,
    max_attempts: u32,
    requests: &mut u32,
) -> Result<crate::sim::GetReceipt, ReadError> {
    loop {
        *requests += 1;
        match sim.get_object_range(&obj.bucket, &obj.key, range, at) {
            Ok(r) => return Ok(r),
            Err(SimError::RequestFailed { at: failed }) if *requests < max_attempts => at = failed,
            Err(SimError::RangeUnsatisfiable { .. }) => {
                return Err(FormatError::CorruptFile("footer range outside object".into()).into())
            }
            Err(e) => return Err(ReadError::fetch_failed(&obj.bucket, &obj.key, &e)),
        }
    }
}

/// Reads the footer with a fixed-size tail probe, plus one more request when
/// the footer does not fit in the probe.
pub fn read_footer(
    sim: &Simulator,
    obj: &ObjectRef,
    at: SimTime,
    probe_len: u64,
    max_attempts: u32,
) -> Result<FooterRead, ReadError> {
    let mut requests = 0;
    let probe = get_with_retry(
        sim,
        obj,
        ByteRange::Suffix { len: probe_len },
        at,
        max_attempts,
        &mut requests,
    )?;
    let size = probe.object_size;
    if (size as usize) < MAGIC.len() + TRAILER_LEN {
        return Err(FormatError::CorruptFile("object shorter than trailer".into()).into());
    }
    if probe.offset == 0 && &probe.bytes[..MAGIC.len()] != MAGIC {
        return Err(FormatError::CorruptFile("bad leading magic".into()).into());
    }
    let footer_len = format::parse_trailer(&probe.bytes)? as u64;
    let footer_start = (size - TRAILER_LEN as u64)
        .checked_sub(footer_len)
        .filter(|s| *s >= MAGIC.len() as u64)
        .ok_or_else(|| FormatError::CorruptFile("footer length out of bounds".into()))?;
    let mut done = probe.completed_at;
    let footer_bytes = if footer_start >= probe.offset {
        let s = (footer_start - probe.offset) as usize;
        probe.bytes.slice(s..s + footer_len as usize)
    } else {
        let r = get_with_retry(
            sim,
            obj,
            ByteRange::Bounded {
                offset: footer_start,
                len: footer_len,
            },
            done,
            max_attempts + requests,
            &mut requests,
        )?;
        done = r.completed_at;
        r.bytes
    };
    let footer = format::parse_footer(&footer_bytes)?;
    format::check_layout(&footer, footer_start)?;
    Ok(FooterRead {
        footer,
        file_size: size,
        probe: probe.bytes,
        probe_offset: probe.offset,
        completed_at: done,
        requests,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatOp {
    Eq,
    Lt,
    Le,
    Gt,
    Ge,
}

/// `column op value`, evaluated conservatively against chunk min/max.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StatPredicate {
    pub column: String,
    pub op: StatOp,
    pub value: ScalarValue,
}

/// Conjunction of [`StatPredicate`]s.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub struct RowGroupFilter {
    pub conjuncts: Vec<StatPredicate>,
}

impl RowGroupFilter {
    /// False only if no row of the group can satisfy every conjunct.
    pub fn may_match(&self, schema: &Schema, group: &format::RowGroupMeta) -> bool {
        self.conjuncts.iter().all(|p| {
            let Some(i) = schema.index_of(&p.column) else {
                return true;
            };
            let c = &group.columns[i];
            if c.null_count == group.row_count && group.row_count > 0 {
                // Comparisons with NULL never hold.
                return false;
            }
            let (Some(min), Some(max)) = (&c.min, &c.max) else {
                return group.row_count > 0 || c.min.is_some();
            };
            let lo = compare_values(min, &p.value);
            let hi = compare_values(max, &p.value);
            match p.op {
                StatOp::Eq => lo != Ordering::Greater && hi != Ordering::Less,
                StatOp::Lt => lo == Ordering::Less,
                StatOp::Le => lo != Ordering::Greater,
                StatOp::Gt => hi == Ordering::Greater,
                StatOp::Ge => hi != Ordering::Less,
            }
        })
    }
}

/// Selects every `modulus`-th row group starting at `residue`; nested
/// slices apply to the positions that survived the previous level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StrideSlice {
    pub modulus: u32,
    pub residue: u32,
}

pub fn stride_selects(slices: &[StrideSlice], index: usize) -> bool {
    let mut idx = index as u64;
    for s in slices {
        let m = s.modulus.max(1) as u64;
        if idx % m != s.residue as u64 {
            return false;
        }
        idx /= m;
    }
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannedChunk {
    pub row_group: usize,
    /// Index into the plan's projected columns.
    pub column: usize,
    pub offset: u64,
    pub length: u64,
}

/// One range request, landing at `buffer_offset` inside chunk `buffer`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RangeRequest {
    pub offset: u64,
    pub length: u64,
    pub buffer: usize,
    pub buffer_offset: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RangeRequestPlan {
    pub object: ObjectRef,
    /// Positions in the file schema of the projected columns, in request order.
    pub columns: Vec<usize>,
    pub row_groups: Vec<usize>,
    /// One buffer per chunk, row-group major.
    pub chunks: Vec<PlannedChunk>,
    pub ranges: Vec<RangeRequest>,
    pub max_request_bytes: u64,
}

impl RangeRequestPlan {
    pub fn total_bytes(&self) -> u64 {
        self.ranges.iter().map(|r| r.length).sum()
    }

    pub fn projected_schema(&self, footer: &Footer) -> Schema {
        Schema::new(
            self.columns
                .iter()
                .map(|&i| footer.schema.fields[i].clone())
                .collect(),
        )
    }
}

/// Plans the range requests needed to read `columns` from the row groups
/// that survive `slices` and `filter`.
pub fn plan_ranges(
    object: &ObjectRef,
    footer: &Footer,
    columns: &[String],
    filter: Option<&RowGroupFilter>,
    slices: &[StrideSlice],
    max_request_bytes: u64,
) -> Result<RangeRequestPlan, FormatError> {
    let max_request_bytes = max_request_bytes.max(1);
    let col_idx = columns
        .iter()
        .map(|c| {
            footer
                .schema
                .index_of(c)
                .ok_or_else(|| FormatError::UnknownColumn(c.clone()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let row_groups: Vec<usize> = footer
        .row_groups
        .iter()
        .enumerate()
        .filter(|(i, g)| {
            stride_selects(slices, *i) && filter.map_or(true, |f| f.may_match(&footer.schema, g))
        })
        .map(|(i, _)| i)
        .collect();
    let mut chunks = Vec::new();
    let mut ranges = Vec::new();
    for &rg in &row_groups {
        for (pos, &ci) in col_idx.iter().enumerate() {
            let m = &footer.row_groups[rg].columns[ci];
            let buffer = chunks.len();
            chunks.push(PlannedChunk {
                row_group: rg,
                column: pos,
                offset: m.offset,
                length: m.length,
            });
            let mut done = 0;
            while done < m.length {
                let len = (m.length - done).min(max_request_bytes);
                ranges.push(RangeRequest {
                    offset: m.offset + done,
                    length: len,
                    buffer,
                    buffer_offset: done,
                });
                done += len;
            }
        }
    }
    Ok(RangeRequestPlan {
        object: object.clone(),
        columns: col_idx,
        row_groups,
        chunks,
        ranges,
        max_request_bytes,
    })
}

/// Lazily decodes fetched chunks one row group at a time, yielding batches
/// of at most `batch_rows` rows. Only one decoded row group is held.
pub struct ChunkDecoder<'a> {
    plan: &'a RangeRequestPlan,
    footer: &'a Footer,
    buffers: &'a [Bytes],
    schema: SchemaRef,
    batch_rows: usize,
    next_group: usize,
    current: Option<(RecordBatch, usize)>,
}

impl<'a> ChunkDecoder<'a> {
    pub fn new(plan: &'a RangeRequestPlan, footer: &'a Footer, buffers: &'a [Bytes], batch_rows: usize) -> Self {
        Self {
            plan,
            footer,
            buffers,
            schema: Arc::new(plan.projected_schema(footer)),
            batch_rows: if batch_rows == 0 { DEFAULT_BATCH_ROWS } else { batch_rows },
            next_group: 0,
            current: None,
        }
    }

    pub fn schema(&self) -> &SchemaRef {
        &self.schema
    }

    /// Decodes the `i`-th planned row group in full.
    pub fn decode_group(&self, i: usize) -> Result<RecordBatch, FormatError> {
        let rg = self.plan.row_groups[i];
        let rows = self.footer.row_groups[rg].row_count as usize;
        let ncols = self.plan.columns.len();
        let mut cols = Vec::with_capacity(ncols);
        for pos in 0..ncols {
            let buffer = i * ncols + pos;
            let fi = self.plan.columns[pos];
            let field = &self.footer.schema.fields[fi];
            let meta = &self.footer.row_groups[rg].columns[fi];
            cols.push(format::decode_chunk(
                &self.buffers[buffer],
                meta,
                field.data_type,
                field.nullable,
                rows,
            )?);
        }
        RecordBatch::with_rows(self.schema.clone(), cols, rows)
            .map_err(|e| FormatError::CorruptFile(e.to_string()))
    }
}

impl Iterator for ChunkDecoder<'_> {
    type Item = Result<RecordBatch, FormatError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if let Some((batch, off)) = &mut self.current {
                if *off < batch.row_count {
                    let n = self.batch_rows.min(batch.row_count - *off);
                    let out = if *off == 0 && n == batch.row_count {
                        batch.clone()
                    } else {
                        batch.slice(*off, n)
                    };
                    *off += n;
                    return Some(Ok(out));
                }
                self.current = None;
            }
            if self.next_group >= self.plan.row_groups.len() {
                return None;
            }
            let g = self.next_group;
            self.next_group += 1;
            match self.decode_group(g) {
                Ok(b) => self.current = Some((b, 0)),
                Err(e) => {
                    self.next_group = self.plan.row_groups.len();
                    return Some(Err(e));
                }
            }
        }
    }
}

pub fn decode_chunks<'a>(
    plan: &'a RangeRequestPlan,
    footer: &'a Footer,
    buffers: &'a [Bytes],
    batch_rows: usize,
) -> ChunkDecoder<'a> {
    ChunkDecoder::new(plan, footer, buffers, batch_rows)
}
