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

//! Benchmark plumbing: data generation, the reference executor and the
//! elasticity sweep.

pub mod datagen;
pub mod oracle;

use serde::{Deserialize, Serialize};

use crate::exec::coordinator::{Engine, EngineConfig, QueryError, RunReport};
use crate::sim::{SimConfig, Simulator};
use crate::sql::tpch;
use crate::storage::Catalog;

pub use datagen::{datagen, generate, DataGenSpec};
pub use oracle::{compare_with_oracle, run_oracle, OracleResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub scale_factor: f64,
    pub q1_ms: f64,
    pub q6_ms: f64,
    /// Sum of the two cold-run latencies.
    pub latency_ms: f64,
    pub cost_cents: f64,
    pub invocations: u32,
    pub retriggers: u32,
}

/// Runs `sql` cold: a fresh simulator over a copy of `base`'s storage, no
/// warm sandboxes and the registry not consulted.
pub fn cold_run(
    base: &Simulator,
    sim_config: &SimConfig,
    catalog: &Catalog,
    config: &EngineConfig,
    sql: &str,
) -> Result<RunReport, QueryError> {
    let sim = base.fork_storage(sim_config.clone(), base.fault_plan());
    let mut config = config.clone();
    config.use_cache = false;
    Engine::new(&sim, catalog.clone(), config).run_query(sql)
}

/// Q1 and Q6 cold latencies per dataset, in the order given.
pub fn elasticity_sweep(
    base: &Simulator,
    sim_config: &SimConfig,
    datasets: &[(f64, Catalog)],
    config: &EngineConfig,
) -> Result<Vec<SweepRow>, QueryError> {
    datasets
        .iter()
        .map(|(sf, catalog)| {
            let q1 = cold_run(base, sim_config, catalog, config, tpch::Q1)?;
            let q6 = cold_run(base, sim_config, catalog, config, tpch::Q6)?;
            Ok(SweepRow {
                scale_factor: *sf,
                q1_ms: q1.latency_ms,
                q6_ms: q6.latency_ms,
                latency_ms: q1.latency_ms + q6.latency_ms,
                cost_cents: q1.total_cents + q6.total_cents,
                invocations: q1.invocations + q6.invocations,
                retriggers: [&q1, &q6].iter().flat_map(|r| &r.stages).map(|s| s.retriggers).sum(),
            })
        })
        .collect()
}

/// max/min of the rows' aggregated latency.
pub fn latency_ratio(rows: &[SweepRow]) -> f64 {
    let max = rows.iter().map(|r| r.latency_ms).fold(f64::MIN, f64::max);
    let min = rows.iter().map(|r| r.latency_ms).fold(f64::MAX, f64::min);
    max / min
}
