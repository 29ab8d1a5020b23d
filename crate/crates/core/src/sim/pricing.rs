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

//! Unit prices and function sizing.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Sub};

use serde::{Deserialize, Serialize};

use super::SimError;

pub const MIN_MEMORY_MIB: u32 = 128;
pub const MAX_MEMORY_MIB: u32 = 10_240;
pub const MIN_VCPUS: f64 = 0.07;
pub const MAX_VCPUS: f64 = 5.79;
pub const FUNCTION_NET_GBPS: f64 = 0.63;

pub const GIB: f64 = 1024.0 * 1024.0 * 1024.0;

const PICO: f64 = 1e12;

/// Money in exact fixed-point picocents.
///
/// Per-entry costs are rounded once to the picocent, so totals are exact sums
/// of entries.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cents(pub i128);

impl Cents {
    pub const ZERO: Cents = Cents(0);

    pub fn from_cents(c: f64) -> Self {
        Cents((c * PICO).round() as i128)
    }

    /// `count * price_per_million / 10^6`, computed without float error for
    /// integral counts and prices with at most six decimals.
    pub fn per_million(count: u64, price_per_million: f64) -> Self {
        let micro = (price_per_million * 1e6).round() as i128;
        Cents(count as i128 * micro)
    }

    pub fn as_cents(self) -> f64 {
        self.0 as f64 / PICO
    }

    pub fn picocents(self) -> i128 {
        self.0
    }
}

impl Add for Cents {
    type Output = Cents;
    fn add(self, rhs: Cents) -> Cents {
        Cents(self.0 + rhs.0)
    }
}

impl AddAssign for Cents {
    fn add_assign(&mut self, rhs: Cents) {
        self.0 += rhs.0;
    }
}

impl Sub for Cents {
    type Output = Cents;
    fn sub(self, rhs: Cents) -> Cents {
        Cents(self.0 - rhs.0)
    }
}

impl Sum for Cents {
    fn sum<I: Iterator<Item = Cents>>(iter: I) -> Cents {
        iter.fold(Cents::ZERO, Add::add)
    }
}

impl fmt::Display for Cents {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6}¢", self.as_cents())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StorageClass {
    Standard,
    /// Low-latency single-zone class used for hot shuffle data.
    Hot,
}

impl fmt::Display for StorageClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StorageClass::Standard => "standard",
            StorageClass::Hot => "hot",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoragePrices {
    pub read_per_million: f64,
    pub write_per_million: f64,
    pub transfer_read_per_gib: f64,
    pub transfer_write_per_gib: f64,
    pub storage_per_gib_month: f64,
}

/// Price range for a resource whose unit price depends on function size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceRange {
    pub low: f64,
    pub high: f64,
}

impl PriceRange {
    /// Smallest memory size maps to the highest price, largest to the lowest.
    pub fn at_memory(&self, memory_mib: u32) -> f64 {
        let span = (MAX_MEMORY_MIB - MIN_MEMORY_MIB) as f64;
        let frac = (memory_mib.clamp(MIN_MEMORY_MIB, MAX_MEMORY_MIB) - MIN_MEMORY_MIB) as f64 / span;
        self.high - frac * (self.high - self.low)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSheet {
    /// ¢ per GiB-hour of configured function memory.
    pub function_memory_gib_hour: PriceRange,
    /// ¢ per vCPU-hour. Functions are billed by memory only; this is the
    /// equivalent per-vCPU rate, kept for reporting.
    pub function_vcpu_hour: PriceRange,
    pub standard: StoragePrices,
    pub hot: StoragePrices,
    pub kv_read_per_million: f64,
    pub kv_write_per_million: f64,
    pub queue_per_million: f64,
}

impl Default for PriceSheet {
    fn default() -> Self {
        Self {
            function_memory_gib_hour: PriceRange { low: 3.84, high: 4.80 },
            function_vcpu_hour: PriceRange { low: 6.79, high: 8.49 },
            standard: StoragePrices {
                read_per_million: 40.0,
                write_per_million: 500.0,
                transfer_read_per_gib: 0.0,
                transfer_write_per_gib: 0.0,
                storage_per_gib_month: 2.3,
            },
            hot: StoragePrices {
                read_per_million: 20.0,
                write_per_million: 250.0,
                transfer_read_per_gib: 0.15,
                transfer_write_per_gib: 0.8,
                storage_per_gib_month: 16.0,
            },
            kv_read_per_million: 25.0,
            kv_write_per_million: 125.0,
            queue_per_million: 40.0,
        }
    }
}

impl PriceSheet {
    pub fn storage(&self, class: StorageClass) -> &StoragePrices {
        match class {
            StorageClass::Standard => &self.standard,
            StorageClass::Hot => &self.hot,
        }
    }

    /// Cost of running a function of `memory_mib` for `micros` microseconds.
    pub fn compute_cost(&self, memory_mib: u32, micros: u64) -> Cents {
        let price = self.function_memory_gib_hour.at_memory(memory_mib);
        let gib = memory_mib as f64 / 1024.0;
        let hours = micros as f64 / 3.6e9;
        Cents::from_cents(price * gib * hours)
    }

    pub fn transfer_cost(per_gib: f64, bytes: u64) -> Cents {
        Cents::from_cents(per_gib * bytes as f64 / GIB)
    }
}

/// Deployment configuration of a cloud function.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FunctionSpec {
    pub name: String,
    pub memory_mib: u32,
}

impl FunctionSpec {
    pub fn new(name: impl Into<String>, memory_mib: u32) -> Result<Self, SimError> {
        if !(MIN_MEMORY_MIB..=MAX_MEMORY_MIB).contains(&memory_mib) {
            return Err(SimError::InvalidFunction(format!(
                "memory {memory_mib} MiB outside [{MIN_MEMORY_MIB}, {MAX_MEMORY_MIB}]"
            )));
        }
        Ok(Self {
            name: name.into(),
            memory_mib,
        })
    }

    /// vCPUs scale linearly with memory between the platform bounds.
    pub fn vcpus(&self) -> f64 {
        let span = (MAX_MEMORY_MIB - MIN_MEMORY_MIB) as f64;
        let frac = (self.memory_mib - MIN_MEMORY_MIB) as f64 / span;
        MIN_VCPUS + frac * (MAX_VCPUS - MIN_VCPUS)
    }

    pub fn net_gbps(&self) -> f64 {
        FUNCTION_NET_GBPS
    }

    pub fn memory_bytes(&self) -> u64 {
        self.memory_mib as u64 * 1024 * 1024
    }
}
