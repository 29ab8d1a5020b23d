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

//! Columnar storage: file format, footer-driven range reads, hedged
//! fetching, output objects and the table catalog.

pub mod catalog;
pub mod fetch;
pub mod format;
pub mod output;
pub mod reader;
pub mod types;

pub use catalog::{Catalog, CatalogEntry, CatalogError, Manifest, ManifestObject};
pub use fetch::{fetch, FetchOptions, FetchResult, FetchStats, HeldBytes, NicTimeline};
pub use format::{
    read_file, read_file_footer, write_columnar_file, Compression, FileWriter, Footer, FormatError,
    WriteOptions,
};
pub use output::{output_key, OutputHandle, OutputReceipt};
pub use reader::{
    decode_chunks, plan_ranges, read_footer, ChunkDecoder, FooterRead, ObjectRef, RangeRequestPlan,
    ReadError, RowGroupFilter, StatOp, StatPredicate, StrideSlice,
};
pub use types::{
    Column, ColumnBuilder, ColumnData, DataType, Field, RecordBatch, ScalarValue, Schema, SchemaRef,
    TableSchema, TypeError,
};
