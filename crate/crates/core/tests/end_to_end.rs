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

//! End-to-end query execution against the reference executor.

use skylite::bench::{compare_with_oracle, datagen, run_oracle, DataGenSpec};
use skylite::exec::coordinator::{read_result, Engine, EngineConfig};
use skylite::sim::{SimConfig, Simulator};
use skylite::sql::tpch;

fn setup(sf: f64) -> (Simulator, skylite::storage::Catalog) {
    let sim = Simulator::new(SimConfig::default());
    let catalog = datagen(&sim, &DataGenSpec::new(sf, 42)).unwrap();
    (sim, catalog)
}

#[test]
fn tpch_queries_match_oracle() {
    let (sim, catalog) = setup(0.001);
    let engine = Engine::new(&sim, catalog.clone(), EngineConfig::default());
    for (name, sql) in [("q1", tpch::Q1), ("q6", tpch::Q6), ("q12", tpch::Q12)] {
        let report = engine.run_query(sql).unwrap();
        let got = read_result(&sim, &report).unwrap();
        let want = run_oracle(&sim, &catalog, sql).unwrap();
        compare_with_oracle(&want, &got, 1e-9).unwrap_or_else(|e| panic!("{name}: {e}"));
        eprintln!("{name}: {} rows, {:.1} ms, {} invocations, {:.6} cents", want.rows.len(), report.latency_ms, report.invocations, report.total_cents);
    }
}
