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

//! Table catalog: schemas plus the object manifest of every table.

use std::collections::BTreeMap;

use bytes::Bytes;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::types::TableSchema;
use crate::sim::{SimTime, Simulator, StorageClass};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CatalogError {
    #[error("unknown table {0}")]
    UnknownTable(String),
    #[error("manifest of {table} lists missing object {key}")]
    MissingObject { table: String, key: String },
    #[error("catalog is malformed: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestObject {
    pub bucket: String,
    pub key: String,
    pub file_bytes: u64,
    pub row_count: u64,
    pub row_groups: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub table: String,
    /// Changes whenever the table's objects are rewritten.
    pub version: String,
    pub objects: Vec<ManifestObject>,
}

impl Manifest {
    pub fn total_bytes(&self) -> u64 {
        self.objects.iter().map(|o| o.file_bytes).sum()
    }

    pub fn total_rows(&self) -> u64 {
        self.objects.iter().map(|o| o.row_count).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub schema: TableSchema,
    pub manifest: Manifest,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Catalog {
    pub tables: BTreeMap<String, CatalogEntry>,
}

impl Catalog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, schema: TableSchema, manifest: Manifest) {
        let name = schema.name.to_lowercase();
        self.tables.insert(name, CatalogEntry { schema, manifest });
    }

    pub fn resolve(&self, table: &str) -> Result<(&TableSchema, &Manifest), CatalogError> {
        self.tables
            .get(&table.to_lowercase())
            .map(|e| (&e.schema, &e.manifest))
            .ok_or_else(|| CatalogError::UnknownTable(table.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("catalog serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, CatalogError> {
        serde_json::from_str(text).map_err(|e| CatalogError::Malformed(e.to_string()))
    }

    /// Checks that every listed object exists, without billing.
    pub fn validate_objects(&self, sim: &Simulator) -> Result<(), CatalogError> {
        for (name, e) in &self.tables {
            for o in &e.manifest.objects {
                if sim.peek_object(&o.bucket, &o.key).is_none() {
                    return Err(CatalogError::MissingObject {
                        table: name.clone(),
                        key: o.key.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn store(&self, sim: &Simulator, bucket: &str, key: &str, at: SimTime) {
        // Catalog writes are never fault-injected in practice; a failed put
        // is retried once more at its failure time.
        let bytes = Bytes::from(self.to_json());
        if let Err(crate::sim::SimError::RequestFailed { at }) =
            sim.put_object(bucket, key, bytes.clone(), StorageClass::Standard, at)
        {
            let _ = sim.put_object(bucket, key, bytes, StorageClass::Standard, at);
        }
    }

    /// Loads an unbilled copy; `None` when the object does not exist.
    pub fn load(sim: &Simulator, bucket: &str, key: &str) -> Result<Option<Self>, CatalogError> {
        match sim.peek_object(bucket, key) {
            None => Ok(None),
            Some(o) => {
                let text = std::str::from_utf8(&o.bytes)
                    .map_err(|e| CatalogError::Malformed(e.to_string()))?;
                Self::from_json(text).map(Some)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::SimConfig;
    use crate::storage::types::{DataType, Field, Schema};

    fn entry(objects: Vec<ManifestObject>) -> (TableSchema, Manifest) {
        (
            TableSchema {
                name: "T".into(),
                schema: Schema::new(vec![Field::new("a", DataType::Int64, false)]),
            },
            Manifest {
                table: "t".into(),
                version: "v1".into(),
                objects,
            },
        )
    }

    #[test]
    fn resolve_and_unknown() {
        let mut c = Catalog::new();
        let (s, m) = entry(vec![]);
        c.register(s, m);
        let (schema, manifest) = c.resolve("t").unwrap();
        assert_eq!(schema.schema.len(), 1);
        assert!(manifest.objects.is_empty());
        assert_eq!(c.resolve("nope"), Err(CatalogError::UnknownTable("nope".into())));
    }

    #[test]
    fn json_roundtrip_and_validation() {
        let sim = Simulator::new(SimConfig::default());
        let mut c = Catalog::new();
        let (s, m) = entry(vec![ManifestObject {
            bucket: "d".into(),
            key: "t/0".into(),
            file_bytes: 3,
            row_count: 1,
            row_groups: 1,
        }]);
        c.register(s, m);
        assert_eq!(Catalog::from_json(&c.to_json()).unwrap(), c);
        assert!(c.validate_objects(&sim).is_err());
        sim.import_object("d", "t/0", Bytes::from_static(b"abc"), StorageClass::Standard);
        assert!(c.validate_objects(&sim).is_ok());
        c.store(&sim, "d", "catalog.json", 0);
        assert_eq!(Catalog::load(&sim, "d", "catalog.json").unwrap(), Some(c));
    }
}
