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

//! Stable key hashing for exchange partitioning.
//!
//! Partition ids must agree across workers, processes and builds, so the
//! hash is a fixed FNV-1a over a canonical value encoding rather than the
//! std hasher.

use crate::storage::{Column, ColumnData, ScalarValue};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

#[derive(Debug, Clone, Copy)]
pub struct Fnv1a(u64);

impl Default for Fnv1a {
    fn default() -> Self {
        Self(FNV_OFFSET)
    }
}

impl Fnv1a {
    pub fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(FNV_PRIME);
        }
    }

    pub fn finish(&self) -> u64 {
        self.0
    }
}

/// Exact numerics are reduced to their shortest scale so that values equal
/// under comparison (1, 1.0, 1.00) hash alike.
fn write_exact(h: &mut Fnv1a, mut v: i128, mut s: u8) {
    while s > 0 && v % 10 == 0 {
        v /= 10;
        s -= 1;
    }
    h.write(&[2]);
    h.write(&v.to_le_bytes());
    h.write(&[s]);
}

pub fn hash_value(h: &mut Fnv1a, v: &ScalarValue) {
    match v {
        ScalarValue::Null => h.write(&[0]),
        ScalarValue::Bool(b) => h.write(&[1, *b as u8]),
        ScalarValue::Int64(x) => write_exact(h, *x as i128, 0),
        ScalarValue::Decimal { value, scale } => write_exact(h, *value as i128, *scale),
        ScalarValue::Float64(f) => {
            h.write(&[3]);
            h.write(&f.to_bits().to_le_bytes());
        }
        ScalarValue::Date(d) => {
            h.write(&[4]);
            h.write(&d.to_le_bytes());
        }
        ScalarValue::Utf8(s) => {
            h.write(&[5]);
            h.write(&(s.len() as u64).to_le_bytes());
            h.write(s.as_bytes());
        }
    }
}

/// Hash of row `i` over `cols`; agrees with [`hash_value`] on `Column::value`.
fn hash_cell(h: &mut Fnv1a, c: &Column, i: usize) {
    if !c.is_valid(i) {
        return h.write(&[0]);
    }
    match &c.data {
        ColumnData::Int64(v) => write_exact(h, v[i] as i128, 0),
        ColumnData::Decimal(v) => write_exact(h, v[i] as i128, c.data_type.scale()),
        _ => hash_value(h, &c.value(i)),
    }
}

pub fn hash_row(cols: &[Column], i: usize) -> u64 {
    let mut h = Fnv1a::default();
    for c in cols {
        hash_cell(&mut h, c, i);
    }
    h.finish()
}

pub fn hash_values(values: &[ScalarValue]) -> u64 {
    let mut h = Fnv1a::default();
    for v in values {
        hash_value(&mut h, v);
    }
    h.finish()
}

/// Partition of every row: `hash(keys) mod n`. With no key columns every
/// row goes to partition 0.
pub fn partition_rows(cols: &[Column], rows: usize, n: u32) -> Vec<u32> {
    if cols.is_empty() || n <= 1 {
        return vec![0; rows];
    }
    (0..rows).map(|i| (hash_row(cols, i) % n as u64) as u32).collect()
}
