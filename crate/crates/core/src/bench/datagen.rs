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

//! Deterministic pseudo-TPC-H generator for `lineitem` and `orders`.
//!
//! Value rules follow the reference generator closely enough for the three
//! benchmark queries: uniform order dates, ship/commit/receipt offsets,
//! status flags derived from a fixed current date, and fixed dictionaries.

use std::sync::Arc;

use bytes::Bytes;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::sim::{Simulator, StorageClass};
use crate::sql::tpch;
use crate::storage::types::parse_date;
use crate::storage::{
    Catalog, Column, ColumnData, FileWriter, FormatError, Manifest, ManifestObject, RecordBatch, Schema, TableSchema,
    WriteOptions,
};

pub const PRIORITIES: [&str; 5] = ["1-URGENT", "2-HIGH", "3-MEDIUM", "4-NOT SPECIFIED", "5-LOW"];
pub const SHIP_MODES: [&str; 7] = ["REG AIR", "AIR", "RAIL", "SHIP", "TRUCK", "MAIL", "FOB"];
pub const SHIP_INSTRUCTIONS: [&str; 4] = ["DELIVER IN PERSON", "COLLECT COD", "NONE", "TAKE BACK RETURN"];
const WORDS: [&str; 24] = [
    "furiously", "quickly", "carefully", "blithely", "slyly", "final", "regular", "special", "pending", "express",
    "ironic", "bold", "deposits", "requests", "accounts", "packages", "instructions", "theodolites", "foxes",
    "pinto", "beans", "sleep", "haggle", "nag",
];

pub const ORDERS_PER_SF: f64 = 1_500_000.0;

/// Rows per generated row group. Column chunks of a few hundred KiB keep
/// scans bandwidth-bound rather than bound by per-request latency.
pub const DATAGEN_ROW_GROUP_ROWS: usize = 65_536;

#[derive(Debug, Clone, PartialEq)]
pub struct DataGenSpec {
    pub scale_factor: f64,
    /// Subset of {lineitem, orders}; both are always generated together.
    pub tables: Vec<String>,
    pub seed: u64,
    pub target_file_bytes: u64,
    pub bucket: String,
    pub prefix: String,
    pub write: WriteOptions,
}

impl DataGenSpec {
    pub fn new(scale_factor: f64, seed: u64) -> Self {
        Self {
            scale_factor,
            tables: vec!["lineitem".into(), "orders".into()],
            seed,
            target_file_bytes: 8 << 20,
            bucket: "skylite-data".into(),
            prefix: format!("tpch/sf{scale_factor}"),
            write: WriteOptions {
                row_group_rows: DATAGEN_ROW_GROUP_ROWS,
                ..WriteOptions::default()
            },
        }
    }

    pub fn order_count(&self) -> u64 {
        (ORDERS_PER_SF * self.scale_factor).round().max(1.0) as u64
    }

    pub fn catalog_key(&self) -> String {
        format!("{}/catalog.json", self.prefix)
    }
}

/// Sparse order keys as in the reference generator: 8 of every 32.
pub fn order_key(i: u64) -> i64 {
    ((i / 8) * 32 + i % 8 + 1) as i64
}

/// Retail price in cents for a part key.
pub fn retail_price_cents(partkey: i64) -> i64 {
    90_000 + (partkey / 10) % 20_001 + 100 * (partkey % 1_000)
}

fn comment(rng: &mut ChaCha8Rng, min: usize, max: usize) -> String {
    let target = rng.gen_range(min..=max);
    let mut s = String::with_capacity(target + 12);
    while s.len() < target {
        if !s.is_empty() {
            s.push(' ');
        }
        s.push_str(WORDS[rng.gen_range(0..WORDS.len())]);
    }
    s.truncate(target);
    s
}

#[derive(Default)]
struct LineitemCols {
    orderkey: Vec<i64>,
    partkey: Vec<i64>,
    suppkey: Vec<i64>,
    linenumber: Vec<i64>,
    quantity: Vec<i64>,
    extendedprice: Vec<i64>,
    discount: Vec<i64>,
    tax: Vec<i64>,
    returnflag: Vec<String>,
    linestatus: Vec<String>,
    shipdate: Vec<i32>,
    commitdate: Vec<i32>,
    receiptdate: Vec<i32>,
    shipinstruct: Vec<String>,
    shipmode: Vec<String>,
    comment: Vec<String>,
}

impl LineitemCols {
    fn len(&self) -> usize {
        self.orderkey.len()
    }

    fn take(&mut self, schema: &Arc<Schema>) -> RecordBatch {
        let t = std::mem::take(self);
        let f = |i: usize| schema.fields[i].data_type;
        let cols = vec![
            Column::new(f(0), ColumnData::Int64(t.orderkey), None),
            Column::new(f(1), ColumnData::Int64(t.partkey), None),
            Column::new(f(2), ColumnData::Int64(t.suppkey), None),
            Column::new(f(3), ColumnData::Int64(t.linenumber), None),
            Column::new(f(4), ColumnData::Decimal(t.quantity), None),
            Column::new(f(5), ColumnData::Decimal(t.extendedprice), None),
            Column::new(f(6), ColumnData::Decimal(t.discount), None),
            Column::new(f(7), ColumnData::Decimal(t.tax), None),
            Column::new(f(8), ColumnData::Utf8(t.returnflag), None),
            Column::new(f(9), ColumnData::Utf8(t.linestatus), None),
            Column::new(f(10), ColumnData::Date(t.shipdate), None),
            Column::new(f(11), ColumnData::Date(t.commitdate), None),
            Column::new(f(12), ColumnData::Date(t.receiptdate), None),
            Column::new(f(13), ColumnData::Utf8(t.shipinstruct), None),
            Column::new(f(14), ColumnData::Utf8(t.shipmode), None),
            Column::new(f(15), ColumnData::Utf8(t.comment), None),
        ];
        RecordBatch::try_new(schema.clone(), cols).expect("generated columns match the schema")
    }
}

#[derive(Default)]
struct OrderCols {
    orderkey: Vec<i64>,
    custkey: Vec<i64>,
    orderstatus: Vec<String>,
    totalprice: Vec<i64>,
    orderdate: Vec<i32>,
    orderpriority: Vec<String>,
    clerk: Vec<String>,
    shippriority: Vec<i64>,
    comment: Vec<String>,
}

impl OrderCols {
    fn len(&self) -> usize {
        self.orderkey.len()
    }

    fn take(&mut self, schema: &Arc<Schema>) -> RecordBatch {
        let t = std::mem::take(self);
        let f = |i: usize| schema.fields[i].data_type;
        let cols = vec![
            Column::new(f(0), ColumnData::Int64(t.orderkey), None),
            Column::new(f(1), ColumnData::Int64(t.custkey), None),
            Column::new(f(2), ColumnData::Utf8(t.orderstatus), None),
            Column::new(f(3), ColumnData::Decimal(t.totalprice), None),
            Column::new(f(4), ColumnData::Date(t.orderdate), None),
            Column::new(f(5), ColumnData::Utf8(t.orderpriority), None),
            Column::new(f(6), ColumnData::Utf8(t.clerk), None),
            Column::new(f(7), ColumnData::Int64(t.shippriority), None),
            Column::new(f(8), ColumnData::Utf8(t.comment), None),
        ];
        RecordBatch::try_new(schema.clone(), cols).expect("generated columns match the schema")
    }
}

/// Splits a batch stream into files of about `target` bytes, cutting only
/// at row-group boundaries.
struct FileSplitter {
    schema: Arc<Schema>,
    options: WriteOptions,
    target: u64,
    writer: Option<FileWriter>,
    files: Vec<(Vec<u8>, u64, u32)>,
    rows: u64,
    groups: u32,
}

impl FileSplitter {
    fn new(schema: Arc<Schema>, options: WriteOptions, target: u64) -> Self {
        Self {
            schema,
            options,
            target,
            writer: None,
            files: vec![],
            rows: 0,
            groups: 0,
        }
    }

    fn write(&mut self, batch: &RecordBatch) -> Result<(), FormatError> {
        if self.writer.is_none() {
            self.writer = Some(FileWriter::new(self.schema.clone(), self.options)?);
        }
        let w = self.writer.as_mut().expect("writer open");
        w.write(batch)?;
        self.rows += batch.num_rows() as u64;
        self.groups += 1;
        if w.bytes_written() as u64 >= self.target {
            self.close();
        }
        Ok(())
    }

    fn close(&mut self) {
        if let Some(w) = self.writer.take() {
            self.files.push((w.finish(), self.rows, self.groups));
            self.rows = 0;
            self.groups = 0;
        }
    }

    fn finish(mut self) -> Vec<(Vec<u8>, u64, u32)> {
        self.close();
        self.files
    }
}

/// One generated table: its schema and file images with (rows, row groups).
pub struct GeneratedTable {
    pub schema: TableSchema,
    pub files: Vec<(Vec<u8>, u64, u32)>,
}

impl GeneratedTable {
    pub fn rows(&self) -> u64 {
        self.files.iter().map(|f| f.1).sum()
    }
}

/// Generates both tables in memory. Identical specs give identical bytes.
pub fn generate(spec: &DataGenSpec) -> Result<Vec<GeneratedTable>, FormatError> {
    let li_schema = tpch::lineitem_schema();
    let or_schema = tpch::orders_schema();
    let li_ref = Arc::new(li_schema.schema.clone());
    let or_ref = Arc::new(or_schema.schema.clone());
    let group = spec.write.row_group_rows.max(1);
    // Each group is written as one batch so files cut at group boundaries.
    let mut li_out = FileSplitter::new(li_ref.clone(), spec.write, spec.target_file_bytes);
    let mut or_out = FileSplitter::new(or_ref.clone(), spec.write, spec.target_file_bytes);
    let mut li = LineitemCols::default();
    let mut or = OrderCols::default();

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let sf = spec.scale_factor;
    let scaled = |base: f64| ((base * sf).round() as i64).max(1);
    let (customers, parts, suppliers, clerks) = (scaled(150_000.0), scaled(200_000.0), scaled(10_000.0), scaled(1_000.0));
    let start = parse_date("1992-01-01").expect("valid date");
    let end = parse_date("1998-12-31").expect("valid date");
    let current = parse_date("1995-06-17").expect("valid date");

    for i in 0..spec.order_count() {
        let okey = order_key(i);
        let orderdate = rng.gen_range(start..=end - 151);
        let lines = rng.gen_range(1..=7);
        let mut total: i128 = 0;
        let (mut all_f, mut all_o) = (true, true);
        for line in 1..=lines {
            let partkey = rng.gen_range(1..=parts);
            let quantity: i64 = rng.gen_range(1..=50);
            let discount: i64 = rng.gen_range(0..=10);
            let tax: i64 = rng.gen_range(0..=8);
            let price = quantity * retail_price_cents(partkey);
            let shipdate = orderdate + rng.gen_range(1..=121);
            let commitdate = orderdate + rng.gen_range(30..=90);
            let receiptdate = shipdate + rng.gen_range(1..=30);
            let returnflag = if receiptdate <= current {
                if rng.gen_bool(0.5) {
                    "R"
                } else {
                    "A"
                }
            } else {
                "N"
            };
            let linestatus = if shipdate > current { "O" } else { "F" };
            all_f &= linestatus == "F";
            all_o &= linestatus == "O";
            // Cents × (1 + tax) × (1 - discount), truncated to cents.
            total += price as i128 * (100 + tax) as i128 * (100 - discount) as i128 / 10_000;
            li.orderkey.push(okey);
            li.partkey.push(partkey);
            li.suppkey.push(rng.gen_range(1..=suppliers));
            li.linenumber.push(line);
            li.quantity.push(quantity * 100);
            li.extendedprice.push(price);
            li.discount.push(discount);
            li.tax.push(tax);
            li.returnflag.push(returnflag.into());
            li.linestatus.push(linestatus.into());
            li.shipdate.push(shipdate);
            li.commitdate.push(commitdate);
            li.receiptdate.push(receiptdate);
            li.shipinstruct.push(SHIP_INSTRUCTIONS[rng.gen_range(0..SHIP_INSTRUCTIONS.len())].into());
            li.shipmode.push(SHIP_MODES[rng.gen_range(0..SHIP_MODES.len())].into());
            li.comment.push(comment(&mut rng, 10, 43));
            if li.len() == group {
                li_out.write(&li.take(&li_ref))?;
            }
        }
        or.orderkey.push(okey);
        or.custkey.push(rng.gen_range(1..=customers));
        or.orderstatus.push(
            if all_f {
                "F"
            } else if all_o {
                "O"
            } else {
                "P"
            }
            .into(),
        );
        or.totalprice.push(total as i64);
        or.orderdate.push(orderdate);
        or.orderpriority.push(PRIORITIES[rng.gen_range(0..PRIORITIES.len())].into());
        or.clerk.push(format!("Clerk#{:09}", rng.gen_range(1..=clerks)));
        or.shippriority.push(0);
        or.comment.push(comment(&mut rng, 19, 78));
        if or.len() == group {
            or_out.write(&or.take(&or_ref))?;
        }
    }
    if li.len() > 0 {
        li_out.write(&li.take(&li_ref))?;
    }
    if or.len() > 0 {
        or_out.write(&or.take(&or_ref))?;
    }
    Ok(vec![
        GeneratedTable {
            schema: li_schema,
            files: li_out.finish(),
        },
        GeneratedTable {
            schema: or_schema,
            files: or_out.finish(),
        },
    ])
}

/// Generation number of the catalog already stored for `spec`, if any.
fn stored_generation(sim: &Simulator, spec: &DataGenSpec) -> u64 {
    Catalog::load(sim, &spec.bucket, &spec.catalog_key())
        .ok()
        .flatten()
        .and_then(|c| {
            c.resolve("lineitem")
                .or_else(|_| c.resolve("orders"))
                .ok()
                .and_then(|(_, m)| m.version.rsplit_once("-g").and_then(|(_, g)| g.parse().ok()))
        })
        .unwrap_or(0)
}

/// Generates, uploads (unbilled) and registers the requested tables; the
/// catalog is stored under the spec's prefix. Each call bumps the stored
/// generation, so the manifest version changes and cached results over
/// older data miss.
pub fn datagen(sim: &Simulator, spec: &DataGenSpec) -> Result<Catalog, FormatError> {
    let generation = stored_generation(sim, spec) + 1;
    let version = format!("{}-seed{}-g{generation}", spec.prefix, spec.seed);
    let mut catalog = Catalog::new();
    for table in generate(spec)? {
        let name = table.schema.name.clone();
        if !spec.tables.iter().any(|t| t.eq_ignore_ascii_case(&name)) {
            continue;
        }
        let mut objects = Vec::with_capacity(table.files.len());
        for (i, (bytes, rows, groups)) in table.files.into_iter().enumerate() {
            let key = format!("{}/{name}/part-{i:05}.sky", spec.prefix);
            let file_bytes = bytes.len() as u64;
            sim.import_object(&spec.bucket, &key, Bytes::from(bytes), StorageClass::Standard);
            objects.push(ManifestObject {
                bucket: spec.bucket.clone(),
                key,
                file_bytes,
                row_count: rows,
                row_groups: groups,
            });
        }
        catalog.register(
            table.schema,
            Manifest {
                table: name,
                version: version.clone(),
                objects,
            },
        );
    }
    sim.import_object(
        &spec.bucket,
        &spec.catalog_key(),
        Bytes::from(catalog.to_json()),
        StorageClass::Standard,
    );
    Ok(catalog)
}
