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

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultScope {
    Invocation,
    StorageRequest,
    All,
}

impl FaultScope {
    pub fn invocations(self) -> bool {
        matches!(self, FaultScope::Invocation | FaultScope::All)
    }

    pub fn storage_requests(self) -> bool {
        matches!(self, FaultScope::StorageRequest | FaultScope::All)
    }
}

/// Fault and straggler injection settings.
///
/// Faults draw from their own random stream, so a plan whose probabilities
/// are all zero leaves the timeline untouched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultPlan {
    pub straggler_fraction: f64,
    pub straggler_slowdown: f64,
    pub crash_fraction: f64,
    pub scope: FaultScope,
    pub rng_seed: u64,
}

impl Default for FaultPlan {
    fn default() -> Self {
        Self {
            straggler_fraction: 0.0,
            straggler_slowdown: 1.0,
            crash_fraction: 0.0,
            scope: FaultScope::All,
            rng_seed: 0,
        }
    }
}

impl FaultPlan {
    pub fn validate(&self) -> Result<(), String> {
        let p = |x: f64| (0.0..=1.0).contains(&x);
        if !p(self.straggler_fraction) || !p(self.crash_fraction) {
            return Err("fault probabilities must lie in [0, 1]".into());
        }
        if !(self.straggler_slowdown >= 1.0) {
            return Err("straggler slowdown must be >= 1".into());
        }
        Ok(())
    }
}

/// Outcome drawn for one invocation or storage request.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaultDraw {
    pub crash: bool,
    pub slowdown: f64,
}

impl FaultDraw {
    pub const NONE: FaultDraw = FaultDraw {
        crash: false,
        slowdown: 1.0,
    };
}
