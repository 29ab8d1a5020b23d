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


//! Drives the binary through a persisted state directory.

use std::process::Command;

fn skylite(state: &std::path::Path, args: &[&str]) -> serde_json::Value {
    let out = Command::new(env!("CARGO_BIN_EXE_skylite"))
        .arg("--state")
        .arg(state)
        .arg("--json")
        .args(args)
        .output()
        .expect("binary runs");
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("json output")
}

#[test]
fn cache_persists_across_invocations_and_regeneration_misses() {
    let dir = tempfile::tempdir().unwrap();
    let state = dir.path();
    let gen = skylite(state, &["datagen", "--sf", "0.001"]);
    assert_eq!(gen["tables"][0]["rows"].as_u64().map(|r| r > 0), Some(true));

    let cold = skylite(state, &["run", "--tpch", "6", "--sf", "0.001"]);
    assert!(cold["runs"][0]["invocations"].as_u64().unwrap() > 0);
    let warm = skylite(state, &["run", "--tpch", "6", "--sf", "0.001"]);
    assert_eq!(warm["runs"][0]["invocations"], 0);
    assert_eq!(cold["result"], warm["result"]);
    assert_ne!(cold["runs"][0]["qid"], warm["runs"][0]["qid"], "query ids stay unique across sessions");

    let oracle = skylite(state, &["oracle", "--tpch", "6", "--sf", "0.001"]);
    assert_eq!(oracle["rows"], cold["result"]["rows"]);

    skylite(state, &["datagen", "--sf", "0.001"]);
    let after = skylite(state, &["run", "--tpch", "6", "--sf", "0.001"]);
    assert!(after["runs"][0]["invocations"].as_u64().unwrap() > 0);

    let listed = skylite(state, &["cache", "list"]);
    assert!(!listed.as_array().unwrap().is_empty());
    let cleared = skylite(state, &["cache", "clear"]);
    assert_eq!(cleared["cleared"].as_u64(), Some(listed.as_array().unwrap().len() as u64));
    assert_eq!(skylite(state, &["cache", "list"]), serde_json::json!([]));
}

#[test]
fn repeat_and_concurrency_report_every_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = skylite(dir.path(), &["run", "--tpch", "1", "--sf", "0.001", "--no-cache", "--repeat", "2", "--concurrency", "2"]);
    assert_eq!(out["runs"].as_array().unwrap().len(), 4);
    assert!(out["median_latency_ms"].as_f64().unwrap() > 0.0);
}

#[test]
fn bad_input_fails_cleanly() {
    let out = Command::new(env!("CARGO_BIN_EXE_skylite"))
        .args(["run", "--tpch", "3"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("not supported"));
}
