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

//! Columnar file layout:
//!
//! ```text
//! "SKYC1" | chunk* | footer (JSON) | footer_len: u32 LE | "SKYC1"
//! ```
//!
//! Row groups store one contiguous chunk per column. A chunk is the plain
//! encoding of its values, preceded by a validity bitmap when the column is
//! nullable, optionally LZ4-compressed, and guarded by a CRC32 of its stored
//! bytes.

use std::sync::Arc;

use bytes::Bytes;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::types::{
    Column, ColumnBuilder, ColumnData, DataType, RecordBatch, ScalarValue, Schema, SchemaRef,
};

pub const MAGIC: &[u8; 5] = b"SKYC1";
/// Footer length plus trailing magic.
pub const TRAILER_LEN: usize = 9;
pub const DEFAULT_ROW_GROUP_ROWS: usize = 8_192;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FormatError {
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("corrupt file: {0}")]
    CorruptFile(String),
    #[error("unknown column {0}")]
    UnknownColumn(String),
}

fn corrupt(msg: impl Into<String>) -> FormatError {
    FormatError::CorruptFile(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Compression {
    None,
    Lz4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Encoding {
    Plain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkMeta {
    pub offset: u64,
    pub length: u64,
    pub encoding: Encoding,
    pub compression: Compression,
    pub crc32: u32,
    pub null_count: u64,
    /// Absent when the chunk has no non-null value or holds a NaN.
    pub min: Option<ScalarValue>,
    pub max: Option<ScalarValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowGroupMeta {
    pub row_count: u64,
    pub columns: Vec<ChunkMeta>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Footer {
    pub schema: Schema,
    pub row_groups: Vec<RowGroupMeta>,
}

impl Footer {
    pub fn total_rows(&self) -> u64 {
        self.row_groups.iter().map(|g| g.row_count).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WriteOptions {
    pub row_group_rows: usize,
    pub compression: Compression,
}

impl Default for WriteOptions {
    fn default() -> Self {
        Self {
            row_group_rows: DEFAULT_ROW_GROUP_ROWS,
            compression: Compression::Lz4,
        }
    }
}

/// Streams batches into a columnar file held in memory. Output bytes are a
/// pure function of the appended rows and the options.
pub struct FileWriter {
    schema: SchemaRef,
    options: WriteOptions,
    buf: Vec<u8>,
    pending: Vec<ColumnBuilder>,
    pending_rows: usize,
    row_groups: Vec<RowGroupMeta>,
    rows_written: u64,
}

impl FileWriter {
    pub fn new(schema: SchemaRef, options: WriteOptions) -> Result<Self, FormatError> {
        if options.row_group_rows == 0 {
            return Err(FormatError::SchemaMismatch("row_group_rows must be >= 1".into()));
        }
        schema.validate().map_err(FormatError::SchemaMismatch)?;
        let pending = Self::builders(&schema, options.row_group_rows);
        Ok(Self {
            schema,
            options,
            buf: MAGIC.to_vec(),
            pending,
            pending_rows: 0,
            row_groups: Vec::new(),
            rows_written: 0,
        })
    }

    fn builders(schema: &Schema, cap: usize) -> Vec<ColumnBuilder> {
        schema
            .fields
            .iter()
            .map(|f| ColumnBuilder::new(f.data_type, cap))
            .collect()
    }

    pub fn schema(&self) -> &SchemaRef {
        &self.schema
    }

    pub fn rows_written(&self) -> u64 {
        self.rows_written + self.pending_rows as u64
    }

    /// Bytes of completed row groups so far.
    pub fn bytes_written(&self) -> usize {
        self.buf.len()
    }

    pub fn write(&mut self, batch: &RecordBatch) -> Result<(), FormatError> {
        if batch.schema.fields.len() != self.schema.fields.len()
            || batch
                .schema
                .fields
                .iter()
                .zip(&self.schema.fields)
                .any(|(a, b)| a.data_type != b.data_type || (a.nullable && !b.nullable))
        {
            return Err(FormatError::SchemaMismatch(format!(
                "batch schema {:?} does not match file schema",
                batch.schema.fields.iter().map(|f| &f.name).collect::<Vec<_>>()
            )));
        }
        for (c, f) in batch.columns.iter().zip(&self.schema.fields) {
            if !f.nullable && c.null_count() > 0 {
                return Err(FormatError::SchemaMismatch(format!("null in {}", f.name)));
            }
        }
        let mut offset = 0;
        while offset < batch.row_count {
            let room = self.options.row_group_rows - self.pending_rows;
            let take = room.min(batch.row_count - offset);
            let part = if offset == 0 && take == batch.row_count {
                batch.clone()
            } else {
                batch.slice(offset, take)
            };
            for (b, c) in self.pending.iter_mut().zip(&part.columns) {
                b.extend_from(c);
            }
            self.pending_rows += take;
            offset += take;
            if self.pending_rows == self.options.row_group_rows {
                self.flush_row_group();
            }
        }
        Ok(())
    }

    fn flush_row_group(&mut self) {
        if self.pending_rows == 0 {
            return;
        }
        let builders = std::mem::replace(
            &mut self.pending,
            Self::builders(&self.schema, self.options.row_group_rows),
        );
        let mut metas = Vec::with_capacity(builders.len());
        for (b, f) in builders.into_iter().zip(&self.schema.fields) {
            let col = b.finish();
            let raw = encode_plain(&col, f.nullable);
            let stored = match self.options.compression {
                Compression::None => raw,
                Compression::Lz4 => lz4_flex::compress_prepend_size(&raw),
            };
            let (min, max) = column_stats(&col);
            metas.push(ChunkMeta {
                offset: self.buf.len() as u64,
                length: stored.len() as u64,
                encoding: Encoding::Plain,
                compression: self.options.compression,
                crc32: crc32fast::hash(&stored),
                null_count: col.null_count() as u64,
                min,
                max,
            });
            self.buf.extend_from_slice(&stored);
        }
        self.row_groups.push(RowGroupMeta {
            row_count: self.pending_rows as u64,
            columns: metas,
        });
        self.rows_written += self.pending_rows as u64;
        self.pending_rows = 0;
    }

    pub fn finish(mut self) -> Vec<u8> {
        self.flush_row_group();
        let footer = Footer {
            schema: (*self.schema).clone(),
            row_groups: self.row_groups,
        };
        let json = serde_json::to_vec(&footer).expect("footer serializes");
        self.buf.extend_from_slice(&json);
        self.buf
            .extend_from_slice(&(json.len() as u32).to_le_bytes());
        self.buf.extend_from_slice(MAGIC);
        self.buf
    }
}

pub fn write_columnar_file<'a>(
    batches: impl IntoIterator<Item = &'a RecordBatch>,
    schema: SchemaRef,
    options: WriteOptions,
) -> Result<Vec<u8>, FormatError> {
    let mut w = FileWriter::new(schema, options)?;
    for b in batches {
        w.write(b)?;
    }
    Ok(w.finish())
}

fn column_stats(col: &Column) -> (Option<ScalarValue>, Option<ScalarValue>) {
    if let ColumnData::Float64(v) = &col.data {
        if v.iter().any(|x| x.is_nan()) {
            return (None, None);
        }
    }
    let mut min: Option<ScalarValue> = None;
    let mut max: Option<ScalarValue> = None;
    for i in 0..col.len() {
        if !col.is_valid(i) {
            continue;
        }
        let v = col.value(i);
        if min.as_ref().map_or(true, |m| v < *m) {
            min = Some(v.clone());
        }
        if max.as_ref().map_or(true, |m| v > *m) {
            max = Some(v);
        }
    }
    (min, max)
}

fn encode_plain(col: &Column, nullable: bool) -> Vec<u8> {
    let n = col.len();
    let mut out = Vec::with_capacity(n * col.data_type.fixed_width().unwrap_or(8) + n / 8 + 1);
    if nullable {
        let mut bitmap = vec![0u8; n.div_ceil(8)];
        for i in 0..n {
            if col.is_valid(i) {
                bitmap[i / 8] |= 1 << (i % 8);
            }
        }
        out.extend_from_slice(&bitmap);
    }
    match &col.data {
        ColumnData::Int64(v) | ColumnData::Decimal(v) => {
            v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()))
        }
        ColumnData::Float64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        ColumnData::Date(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        ColumnData::Bool(v) => out.extend(v.iter().map(|b| *b as u8)),
        ColumnData::Utf8(v) => {
            for s in v {
                out.extend_from_slice(&(s.len() as u32).to_le_bytes());
                out.extend_from_slice(s.as_bytes());
            }
        }
    }
    out
}

/// Decodes one stored chunk into a column of `rows` values.
pub fn decode_chunk(
    stored: &[u8],
    meta: &ChunkMeta,
    data_type: DataType,
    nullable: bool,
    rows: usize,
) -> Result<Column, FormatError> {
    if stored.len() as u64 != meta.length {
        return Err(corrupt("chunk length mismatch"));
    }
    if crc32fast::hash(stored) != meta.crc32 {
        return Err(corrupt("chunk checksum mismatch"));
    }
    let raw;
    let body: &[u8] = match meta.compression {
        Compression::None => stored,
        Compression::Lz4 => {
            raw = lz4_flex::decompress_size_prepended(stored)
                .map_err(|e| corrupt(format!("decompression failed: {e}")))?;
            &raw
        }
    };
    let mut pos = 0usize;
    let validity = if nullable {
        let len = rows.div_ceil(8);
        let bm = body.get(..len).ok_or_else(|| corrupt("truncated validity bitmap"))?;
        pos = len;
        Some((0..rows).map(|i| bm[i / 8] & (1 << (i % 8)) != 0).collect::<Vec<_>>())
    } else {
        None
    };
    let rest = &body[pos..];
    let fixed = |w: usize| -> Result<std::slice::ChunksExact<'_, u8>, FormatError> {
        if rest.len() != w * rows {
            return Err(corrupt("chunk size does not match row count"));
        }
        Ok(rest.chunks_exact(w))
    };
    let data = match data_type {
        DataType::Int64 => ColumnData::Int64(
            fixed(8)?
                .map(|c| i64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect(),
        ),
        DataType::Decimal { .. } => ColumnData::Decimal(
            fixed(8)?
                .map(|c| i64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect(),
        ),
        DataType::Float64 => ColumnData::Float64(
            fixed(8)?
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect(),
        ),
        DataType::Date => ColumnData::Date(
            fixed(4)?
                .map(|c| i32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect(),
        ),
        DataType::Bool => ColumnData::Bool(fixed(1)?.map(|c| c[0] != 0).collect()),
        DataType::Utf8 => {
            let mut v = Vec::with_capacity(rows);
            let mut p = 0usize;
            for _ in 0..rows {
                let len_bytes = rest.get(p..p + 4).ok_or_else(|| corrupt("truncated string"))?;
                let len = u32::from_le_bytes(len_bytes.try_into().expect("4 bytes")) as usize;
                p += 4;
                let s = rest.get(p..p + len).ok_or_else(|| corrupt("truncated string"))?;
                v.push(
                    String::from_utf8(s.to_vec()).map_err(|_| corrupt("invalid utf-8"))?,
                );
                p += len;
            }
            if p != rest.len() {
                return Err(corrupt("trailing bytes in string chunk"));
            }
            ColumnData::Utf8(v)
        }
    };
    Ok(Column::new(data_type, data, validity))
}

/// Reads `footer_len` from the last bytes of a file.
pub fn parse_trailer(tail: &[u8]) -> Result<u32, FormatError> {
    if tail.len() < TRAILER_LEN {
        return Err(corrupt("file shorter than trailer"));
    }
    let t = &tail[tail.len() - TRAILER_LEN..];
    if &t[4..] != MAGIC {
        return Err(corrupt("bad trailing magic"));
    }
    Ok(u32::from_le_bytes(t[..4].try_into().expect("4 bytes")))
}

pub fn parse_footer(json: &[u8]) -> Result<Footer, FormatError> {
    let footer: Footer =
        serde_json::from_slice(json).map_err(|e| corrupt(format!("bad footer: {e}")))?;
    footer
        .schema
        .validate()
        .map_err(|e| corrupt(format!("bad footer schema: {e}")))?;
    for g in &footer.row_groups {
        if g.columns.len() != footer.schema.len() {
            return Err(corrupt("row group column count mismatch"));
        }
    }
    Ok(footer)
}

/// Parses a complete in-memory file. Used by tooling and tests; workers read
/// through range requests instead.
pub fn read_file_footer(file: &[u8]) -> Result<Footer, FormatError> {
    if file.len() < MAGIC.len() + TRAILER_LEN || &file[..MAGIC.len()] != MAGIC {
        return Err(corrupt("bad leading magic"));
    }
    let len = parse_trailer(file)? as usize;
    let end = file.len() - TRAILER_LEN;
    let start = end
        .checked_sub(len)
        .filter(|s| *s >= MAGIC.len())
        .ok_or_else(|| corrupt("footer length out of bounds"))?;
    let footer = parse_footer(&file[start..end])?;
    check_layout(&footer, start as u64)?;
    Ok(footer)
}

/// Chunks must be disjoint and lie between the leading magic and the footer.
pub fn check_layout(footer: &Footer, footer_offset: u64) -> Result<(), FormatError> {
    let mut spans: Vec<(u64, u64)> = footer
        .row_groups
        .iter()
        .flat_map(|g| g.columns.iter().map(|c| (c.offset, c.offset + c.length)))
        .collect();
    spans.sort_unstable();
    let mut prev = MAGIC.len() as u64;
    for (s, e) in spans {
        if s < prev || e > footer_offset {
            return Err(corrupt("chunk ranges overlap or exceed file"));
        }
        prev = e;
    }
    Ok(())
}

/// Decodes all rows of a complete in-memory file.
pub fn read_file(file: &[u8]) -> Result<(Footer, Vec<RecordBatch>), FormatError> {
    let footer = read_file_footer(file)?;
    let schema = Arc::new(footer.schema.clone());
    let mut batches = Vec::new();
    for g in &footer.row_groups {
        let mut cols = Vec::with_capacity(schema.len());
        for (m, f) in g.columns.iter().zip(&schema.fields) {
            let bytes = &file[m.offset as usize..(m.offset + m.length) as usize];
            cols.push(decode_chunk(bytes, m, f.data_type, f.nullable, g.row_count as usize)?);
        }
        batches.push(
            RecordBatch::with_rows(schema.clone(), cols, g.row_count as usize)
                .map_err(|e| corrupt(e.to_string()))?,
        );
    }
    Ok((footer, batches))
}

/// Stored bytes of `file` for a chunk, shared without copying.
pub fn chunk_bytes(file: &Bytes, meta: &ChunkMeta) -> Bytes {
    file.slice(meta.offset as usize..(meta.offset + meta.length) as usize)
}
