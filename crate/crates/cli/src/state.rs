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


//! Persists simulated storage between CLI invocations. Objects and
//! key-value items are stored as content-addressed blobs under the state
//! directory, with a JSON index naming them.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use skylite::sim::{Simulator, StorageClass};

#[derive(Debug, Default, Serialize, Deserialize)]
struct Index {
    /// Name counter of the last session, so query ids stay unique.
    names: u64,
    objects: Vec<ObjectEntry>,
    kv: Vec<KvEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ObjectEntry {
    bucket: String,
    key: String,
    class: StorageClass,
    blob: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct KvEntry {
    key: String,
    blob: String,
}

pub struct StateDir {
    root: PathBuf,
}

impl StateDir {
    pub fn new(root: &Path) -> Self {
        Self { root: root.to_path_buf() }
    }

    fn index_path(&self) -> PathBuf {
        self.root.join("index.json")
    }

    fn blob_path(&self, name: &str) -> PathBuf {
        self.root.join("blobs").join(name)
    }

    /// Imports the saved storage into `sim` (unbilled). A missing directory
    /// is an empty state.
    pub fn load(&self, sim: &Simulator) -> Result<()> {
        let path = self.index_path();
        if !path.exists() {
            return Ok(());
        }
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let index: Index = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        for o in &index.objects {
            let bytes = self.read_blob(&o.blob)?;
            sim.import_object(&o.bucket, &o.key, bytes.into(), o.class);
        }
        for e in &index.kv {
            sim.kv_import(&e.key, self.read_blob(&e.blob)?.into());
        }
        sim.reserve_names(index.names);
        Ok(())
    }

    /// Writes the storage of `sim` back, replacing the previous index and
    /// dropping blobs it no longer references.
    pub fn save(&self, sim: &Simulator) -> Result<()> {
        fs::create_dir_all(self.root.join("blobs")).with_context(|| format!("creating {}", self.root.display()))?;
        let mut index = Index {
            names: sim.name_counter(),
            ..Index::default()
        };
        for o in sim.objects() {
            let blob = self.write_blob(&o.bytes)?;
            index.objects.push(ObjectEntry {
                bucket: o.bucket,
                key: o.key,
                class: o.class,
                blob,
            });
        }
        for (key, value) in sim.kv_entries("") {
            let blob = self.write_blob(&value)?;
            index.kv.push(KvEntry { key, blob });
        }
        let tmp = self.root.join("index.json.tmp");
        fs::write(&tmp, serde_json::to_vec_pretty(&index)?)?;
        fs::rename(&tmp, self.index_path())?;

        let live: std::collections::BTreeSet<&str> = index
            .objects
            .iter()
            .map(|o| o.blob.as_str())
            .chain(index.kv.iter().map(|e| e.blob.as_str()))
            .collect();
        for entry in fs::read_dir(self.root.join("blobs"))? {
            let entry = entry?;
            if !live.contains(entry.file_name().to_string_lossy().as_ref()) {
                fs::remove_file(entry.path())?;
            }
        }
        Ok(())
    }

    fn read_blob(&self, name: &str) -> Result<Vec<u8>> {
        let path = self.blob_path(name);
        fs::read(&path).with_context(|| format!("reading {}", path.display()))
    }

    /// Content-addressed: identical bytes are written once.
    fn write_blob(&self, bytes: &[u8]) -> Result<String> {
        let name = hex::encode(Sha256::digest(bytes));
        let path = self.blob_path(&name);
        if !path.exists() {
            fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        }
        Ok(name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use skylite::sim::SimConfig;

    #[test]
    fn storage_survives_a_save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let state = StateDir::new(dir.path());
        let sim = Simulator::new(SimConfig::default());
        sim.import_object("b", "k", b"hello".to_vec().into(), StorageClass::Hot);
        sim.kv_import("registry/x", b"{}".to_vec().into());
        sim.next_name("q");
        state.save(&sim).unwrap();

        let restored = Simulator::new(SimConfig::default());
        state.load(&restored).unwrap();
        let o = restored.peek_object("b", "k").unwrap();
        assert_eq!((&o.bytes[..], o.class), (&b"hello"[..], StorageClass::Hot));
        assert_eq!(restored.kv_entries("registry/").len(), 1);
        assert_eq!(restored.next_name("q"), "q-2");

        // Deleted objects disappear from the saved state.
        restored.delete_object("b", "k", 0);
        state.save(&restored).unwrap();
        let again = Simulator::new(SimConfig::default());
        state.load(&again).unwrap();
        assert!(again.peek_object("b", "k").is_none());
        assert_eq!(fs::read_dir(dir.path().join("blobs")).unwrap().count(), 1);
    }

    #[test]
    fn missing_directory_is_empty_state() {
        let dir = tempfile::tempdir().unwrap();
        let sim = Simulator::new(SimConfig::default());
        StateDir::new(&dir.path().join("none")).load(&sim).unwrap();
        assert!(sim.objects().is_empty());
    }
}
