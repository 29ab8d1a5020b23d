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

//! Plain-text configuration for latencies, prices, limits and faults.
//!
//! One `key = value` per line, `#` starts a comment. Keys follow
//! `service.class.operation`; latency values are `min/median/tail/max` in
//! milliseconds, price values are in cents. Unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::faults::{FaultPlan, FaultScope};
use super::latency::{LatencyDist, LatencyModel};
use super::pricing::{PriceRange, PriceSheet, StoragePrices};
use super::SimError;

pub const DEFAULT_CONFIG: &str = include_str!("../../config/default.conf");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub latency: LatencyModel,
    pub prices: PriceSheet,
    /// Concurrent pending-or-running invocations allowed per account.
    pub admission_quota: usize,
    pub payload_limit_bytes: usize,
    pub warm_keep_alive_s: u64,
    /// Probability that a received queue message is delivered again later.
    pub queue_redelivery_fraction: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            latency: LatencyModel::default(),
            prices: PriceSheet::default(),
            admission_quota: 1_000,
            payload_limit_bytes: 256 * 1024,
            warm_keep_alive_s: 600,
            queue_redelivery_fraction: 0.0,
            seed: 42,
        }
    }
}

/// Parsed configuration file: simulator settings plus an optional fault plan
/// (present when any `fault.*` key appears).
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigFile {
    pub sim: SimConfig,
    pub faults: Option<FaultPlan>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, SimError> {
        let mut sim = SimConfig::default();
        let mut faults: Option<FaultPlan> = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| SimError::Config(format!("line {}: {msg}", lineno + 1));
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key = value, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            if let Some(rest) = key.strip_prefix("fault.") {
                let plan = faults.get_or_insert_with(FaultPlan::default);
                apply_fault(plan, rest, value).map_err(err)?;
            } else {
                apply(&mut sim, key, value).map_err(err)?;
            }
        }
        sim.latency.validate().map_err(SimError::Config)?;
        if let Some(plan) = &faults {
            plan.validate().map_err(SimError::Config)?;
        }
        Ok(Self { sim, faults })
    }
}

fn num(value: &str) -> Result<f64, String> {
    value
        .parse::<f64>()
        .map_err(|_| format!("not a number: {value:?}"))
}

fn int<T: std::str::FromStr>(value: &str) -> Result<T, String> {
    value
        .parse::<T>()
        .map_err(|_| format!("not an integer: {value:?}"))
}

fn dist(value: &str) -> Result<LatencyDist, String> {
    let parts: Vec<f64> = value.split('/').map(|p| num(p.trim())).collect::<Result<_, _>>()?;
    match parts.as_slice() {
        [min, median, tail, max] => Ok(LatencyDist::new(*min, *median, *tail, *max)),
        _ => Err(format!("expected min/median/tail/max, got {value:?}")),
    }
}

fn range(value: &str) -> Result<PriceRange, String> {
    match value.split_once('/') {
        Some((lo, hi)) => Ok(PriceRange {
            low: num(lo.trim())?,
            high: num(hi.trim())?,
        }),
        None => {
            let v = num(value)?;
            Ok(PriceRange { low: v, high: v })
        }
    }
}

fn storage_price(p: &mut StoragePrices, op: &str, value: &str) -> Result<(), String> {
    let v = num(value)?;
    match op {
        "read_per_m" => p.read_per_million = v,
        "write_per_m" => p.write_per_million = v,
        "transfer_read_gib" => p.transfer_read_per_gib = v,
        "transfer_write_gib" => p.transfer_write_per_gib = v,
        "storage_gib_mo" => p.storage_per_gib_month = v,
        _ => return Err(format!("unknown storage price {op:?}")),
    }
    Ok(())
}

fn apply(sim: &mut SimConfig, key: &str, value: &str) -> Result<(), String> {
    let l = &mut sim.latency;
    let p = &mut sim.prices;
    match key {
        "lambda.cold.start" => l.lambda_cold_start = dist(value)?,
        "lambda.warm.start" => l.lambda_warm_start = dist(value)?,
        "lambda.invoke.api" => l.lambda_invoke_api = dist(value)?,
        "s3.standard.read" => l.standard_read = dist(value)?,
        "s3.standard.write" => l.standard_write = dist(value)?,
        "s3.hot.read" => l.hot_read = dist(value)?,
        "s3.hot.write" => l.hot_write = dist(value)?,
        "sqs.standard.send" => l.queue_send = dist(value)?,
        "kv.standard.read" => l.kv_read = dist(value)?,
        "kv.standard.write" => l.kv_write = dist(value)?,
        "price.lambda.memory_gib_h" => p.function_memory_gib_hour = range(value)?,
        "price.lambda.vcpu_h" => p.function_vcpu_hour = range(value)?,
        "price.kv.standard.read_per_m" => p.kv_read_per_million = num(value)?,
        "price.kv.standard.write_per_m" => p.kv_write_per_million = num(value)?,
        "price.sqs.standard.request_per_m" => p.queue_per_million = num(value)?,
        "limits.admission_quota" => sim.admission_quota = int(value)?,
        "limits.payload_bytes" => sim.payload_limit_bytes = int(value)?,
        "limits.keep_alive_s" => sim.warm_keep_alive_s = int(value)?,
        "sqs.standard.redelivery_fraction" => sim.queue_redelivery_fraction = num(value)?,
        "sim.seed" => sim.seed = int(value)?,
        _ => {
            if let Some(op) = key.strip_prefix("price.s3.standard.") {
                return storage_price(&mut p.standard, op, value);
            }
            if let Some(op) = key.strip_prefix("price.s3.hot.") {
                return storage_price(&mut p.hot, op, value);
            }
            return Err(format!("unknown key {key:?}"));
        }
    }
    Ok(())
}

fn apply_fault(plan: &mut FaultPlan, key: &str, value: &str) -> Result<(), String> {
    match key {
        "straggler_fraction" => plan.straggler_fraction = num(value)?,
        "straggler_slowdown" => plan.straggler_slowdown = num(value)?,
        "crash_fraction" => plan.crash_fraction = num(value)?,
        "seed" => plan.rng_seed = int(value)?,
        "scope" => {
            plan.scope = match value {
                "invocation" => FaultScope::Invocation,
                "storage_request" => FaultScope::StorageRequest,
                "all" => FaultScope::All,
                _ => return Err(format!("unknown fault scope {value:?}")),
            }
        }
        _ => return Err(format!("unknown key fault.{key}")),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_defaults_match_builtin_defaults() {
        let cfg = ConfigFile::parse(DEFAULT_CONFIG).unwrap();
        assert_eq!(cfg.sim, SimConfig::default());
        assert!(cfg.faults.is_none());
    }

    #[test]
    fn parses_overrides_and_fault_plan() {
        let cfg = ConfigFile::parse(
            "s3.standard.read = 1/2/3/4  # fast\n\
             price.s3.hot.transfer_read_gib = 0.5\n\
             fault.crash_fraction = 0.25\n\
             fault.scope = storage_request\n",
        )
        .unwrap();
        assert_eq!(cfg.sim.latency.standard_read, LatencyDist::new(1.0, 2.0, 3.0, 4.0));
        assert_eq!(cfg.sim.prices.hot.transfer_read_per_gib, 0.5);
        let f = cfg.faults.unwrap();
        assert_eq!(f.crash_fraction, 0.25);
        assert_eq!(f.scope, FaultScope::StorageRequest);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(ConfigFile::parse("nope = 1").is_err());
        assert!(ConfigFile::parse("s3.standard.read = 1/2/3").is_err());
        assert!(ConfigFile::parse("fault.crash_fraction = 2").is_err());
        assert!(ConfigFile::parse("no equals sign").is_err());
    }
}
