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

//! Registry of completed pipeline outputs, kept in the key-value store.
//! Entries double as stage checkpoints and as the result cache.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::worker::OutputObject;
use crate::optimizer::{PipelinePlan, ResultCacheKey};
use crate::sim::{SimTime, Simulator};

const PREFIX: &str = "registry/";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistryEntry {
    pub cache_key: ResultCacheKey,
    pub pipeline: usize,
    /// Digest of the pipeline's physical definition; a mismatch is a miss.
    pub pipeline_digest: String,
    /// Output objects ordered by fragment, then partition.
    pub outputs: Vec<OutputObject>,
    pub partition_count: u32,
    pub created_at: SimTime,
    pub creator_qid: String,
}

/// Hash of everything about a pipeline that determines its output rows,
/// excluding its width and estimated sizes.
pub fn pipeline_digest(p: &PipelinePlan) -> String {
    let body = serde_json::json!({
        "source": p.source,
        "input_schema": p.input_schema,
        "ops": p.ops,
        "sink": p.sink,
        "output_schema": p.output_schema,
    });
    hex::encode(Sha256::digest(body.to_string().as_bytes()))
}

pub fn registry_key(key: &ResultCacheKey) -> String {
    format!("{PREFIX}{key}")
}

/// Writes `entry` (last writer wins). Returns the completion time.
pub fn register(sim: &Simulator, entry: &RegistryEntry, at: SimTime) -> SimTime {
    let body = serde_json::to_vec(entry).expect("entries serialize");
    sim.kv_put(&registry_key(&entry.cache_key), body, at)
}

/// Billed lookup. Entries whose objects are gone or whose pipeline
/// definition differs count as misses.
pub fn lookup(
    sim: &Simulator,
    key: &ResultCacheKey,
    pipeline: &PipelinePlan,
    at: SimTime,
) -> (Option<RegistryEntry>, SimTime) {
    let (value, done) = sim.kv_get(&registry_key(key), at);
    let entry = value
        .and_then(|v| serde_json::from_slice::<RegistryEntry>(&v).ok())
        .filter(|e| e.pipeline_digest == pipeline_digest(pipeline))
        .filter(|e| e.outputs.iter().all(|o| sim.peek_object(&o.bucket, &o.key).is_some()));
    (entry, done)
}

/// All entries, unbilled.
pub fn list(sim: &Simulator) -> Vec<RegistryEntry> {
    sim.kv_entries(PREFIX)
        .into_iter()
        .filter_map(|(_, v)| serde_json::from_slice(&v).ok())
        .collect()
}

/// Drops every entry; returns how many were removed. Objects stay.
pub fn clear(sim: &Simulator) -> usize {
    sim.kv_entries(PREFIX)
        .into_iter()
        .filter(|(k, _)| sim.kv_delete(k))
        .count()
}
