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

//! Worker-count sizing from input bytes and per-function bandwidth.

use serde::{Deserialize, Serialize};

use crate::sim::FUNCTION_NET_GBPS;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizingModel {
    pub bandwidth_gbps: f64,
    pub target_seconds: f64,
    pub max_workers: u32,
    pub min_bytes_per_fragment: u64,
}

impl Default for SizingModel {
    fn default() -> Self {
        Self {
            bandwidth_gbps: FUNCTION_NET_GBPS,
            target_seconds: 10.0,
            max_workers: 2_500,
            min_bytes_per_fragment: 32 << 20,
        }
    }
}

impl SizingModel {
    /// Bytes one worker is expected to read within the target time.
    pub fn bytes_per_fragment(&self) -> u64 {
        let burst = (self.bandwidth_gbps * 1e9 / 8.0 * self.target_seconds).round() as u64;
        burst.max(self.min_bytes_per_fragment).max(1)
    }
}

/// `clamp(ceil(bytes / bytes_per_fragment), 1, max_workers)`.
pub fn size_pipeline(input_bytes: u64, model: &SizingModel) -> u32 {
    let w = input_bytes.div_ceil(model.bytes_per_fragment());
    w.clamp(1, model.max_workers.max(1) as u64) as u32
}
