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

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use super::*;

fn func(name: &str) -> FunctionSpec {
    FunctionSpec::new(name, 2048).unwrap()
}

fn finish_after(d: SimTime) -> Entrypoint {
    Box::new(move |_, ctx| InvocationOutcome::Finished(ctx.start_time + d))
}

#[test]
fn first_invoke_cold_then_warm_after_finish() {
    let sim = Simulator::new(SimConfig::default());
    let r1 = sim
        .invoke(InvokeRequest::new(func("w"), "a", 0), finish_after(ms(10.0)))
        .unwrap();
    assert_eq!(r1.start_kind, StartKind::Cold);
    let d = r1.start_time;
    assert!((ms(122.0)..=ms(451.0)).contains(&d));
    sim.run_until_idle();
    let t = sim.now();
    let r2 = sim
        .invoke(InvokeRequest::new(func("w"), "b", t), finish_after(ms(10.0)))
        .unwrap();
    assert_eq!(r2.start_kind, StartKind::Warm);
    assert!((ms(5.0)..=ms(9.0)).contains(&(r2.start_time - t)));
}

#[test]
fn concurrent_invokes_are_cold() {
    let sim = Simulator::new(SimConfig::default());
    for _ in 0..3 {
        let r = sim
            .invoke(InvokeRequest::new(func("w"), "", 0), finish_after(1))
            .unwrap();
        assert_eq!(r.start_kind, StartKind::Cold);
    }
}

#[test]
fn keep_alive_expiry_forces_cold_start() {
    let sim = Simulator::new(SimConfig::default());
    sim.invoke(InvokeRequest::new(func("w"), "", 0), finish_after(1))
        .unwrap();
    sim.run_until_idle();
    let later = sim.now() + 601 * 1_000_000;
    let r = sim
        .invoke(InvokeRequest::new(func("w"), "", later), finish_after(1))
        .unwrap();
    assert_eq!(r.start_kind, StartKind::Cold);
}

#[test]
fn quota_boundary() {
    let sim = Simulator::new(SimConfig::default());
    for _ in 0..1000 {
        sim.invoke(InvokeRequest::new(func("w"), "", 0), finish_after(1))
            .unwrap();
    }
    let err = sim
        .invoke(InvokeRequest::new(func("w"), "", 0), finish_after(1))
        .unwrap_err();
    assert!(matches!(err, SimError::QuotaExceeded { .. }));
    sim.run_until_idle();
    assert_eq!(sim.active_invocations(), 0);
    assert!(sim
        .invoke(InvokeRequest::new(func("w"), "", sim.now()), finish_after(1))
        .is_ok());
}

#[test]
fn payload_limit() {
    let sim = Simulator::new(SimConfig::default());
    let big = vec![0u8; 256 * 1024 + 1];
    let err = sim
        .invoke(InvokeRequest::new(func("w"), big, 0), finish_after(1))
        .unwrap_err();
    assert!(matches!(err, SimError::PayloadTooLarge { .. }));
    assert!(matches!(
        sim.send_message("q", vec![0u8; 256 * 1024 + 1], 0),
        Err(SimError::PayloadTooLarge { .. })
    ));
}

#[test]
fn compute_billed_in_whole_milliseconds() {
    let sim = Simulator::new(SimConfig::default());
    sim.invoke(InvokeRequest::new(func("w"), "", 0), finish_after(1_500))
        .unwrap();
    sim.run_until_idle();
    let ledger = sim.ledger();
    let gib_s = ledger.quantity(CostCategory::ComputeGibS);
    assert!((gib_s - 2.0 * 0.002).abs() < 1e-12);
    let expected = sim.config().prices.compute_cost(2048, 2_000);
    assert_eq!(ledger.total_cost(Some(CostCategory::ComputeGibS)), expected);
}

#[test]
fn detached_invocation_completes_later() {
    let sim = Arc::new(Simulator::new(SimConfig::default()));
    let r = sim
        .invoke(
            InvokeRequest::new(func("c"), "", 0),
            Box::new(|sim: &Simulator, ctx: InvocationCtx| {
                sim.complete_invocation(ctx.id, ctx.start_time + ms(50.0));
                InvocationOutcome::Detached
            }),
        )
        .unwrap();
    sim.run_until_idle();
    let inv = sim.invocation(r.id).unwrap();
    assert_eq!(inv.state, InvocationState::Finished);
    assert_eq!(inv.end_time, Some(inv.start_time + ms(50.0)));
}

#[test]
fn object_roundtrip_and_ranges() {
    let sim = Simulator::new(SimConfig::default());
    sim.put_object("b", "k", &b"0123456789"[..], StorageClass::Standard, 0)
        .unwrap();
    let g = |r| sim.get_object_range("b", "k", r, 0);
    assert_eq!(&g(ByteRange::full()).unwrap().bytes[..], b"0123456789");
    assert_eq!(
        &g(ByteRange::Bounded { offset: 2, len: 3 }).unwrap().bytes[..],
        b"234"
    );
    assert_eq!(&g(ByteRange::Suffix { len: 4 }).unwrap().bytes[..], b"6789");
    assert_eq!(&g(ByteRange::Suffix { len: 40 }).unwrap().bytes[..], b"0123456789");
    assert!(g(ByteRange::Bounded { offset: 0, len: 0 }).unwrap().bytes.is_empty());
    assert!(matches!(
        g(ByteRange::Bounded { offset: 8, len: 3 }),
        Err(SimError::RangeUnsatisfiable { .. })
    ));
    assert!(matches!(
        sim.get_object_range("b", "nope", ByteRange::full(), 0),
        Err(SimError::NoSuchKey { .. })
    ));
    // 6 gets attempted, all billed, plus one put.
    let ledger = sim.ledger();
    assert_eq!(ledger.quantity(CostCategory::RequestsRead), 7.0);
    assert_eq!(ledger.quantity(CostCategory::RequestsWrite), 1.0);
}

#[test]
fn empty_object_roundtrip() {
    let sim = Simulator::new(SimConfig::default());
    sim.put_object("b", "e", Bytes::new(), StorageClass::Hot, 0)
        .unwrap();
    let r = sim
        .get_object_range("b", "e", ByteRange::full(), 0)
        .unwrap();
    assert!(r.bytes.is_empty());
}

#[test]
fn last_writer_wins() {
    let sim = Simulator::new(SimConfig::default());
    sim.put_object("b", "k", &b"one"[..], StorageClass::Standard, 0)
        .unwrap();
    sim.put_object("b", "k", &b"two"[..], StorageClass::Standard, 5)
        .unwrap();
    assert_eq!(&sim.peek_object("b", "k").unwrap().bytes[..], b"two");
}

#[test]
fn list_prefix_and_paging() {
    let sim = Simulator::new(SimConfig::default());
    assert!(sim.list_objects("b", "", 0).keys.is_empty());
    for k in ["b/1", "a/2", "a/1"] {
        sim.put_object("b", k, Bytes::new(), StorageClass::Standard, 0)
            .unwrap();
    }
    assert_eq!(sim.list_objects("b", "a/", 0).keys, vec!["a/1", "a/2"]);
    for i in 0..1500 {
        sim.import_object("p", &format!("x/{i:05}"), Bytes::new(), StorageClass::Standard);
    }
    let mark = sim.ledger_len();
    assert_eq!(sim.list_objects("p", "x/", 0).keys.len(), 1500);
    assert_eq!(
        sim.ledger_since(mark).quantity(CostCategory::RequestsRead),
        2.0
    );
}

#[test]
fn queue_semantics() {
    let sim = Simulator::new(SimConfig::default());
    assert!(sim.receive_messages("q", 10, 0).is_empty());
    sim.send_message("q", &b"hi"[..], 0).unwrap();
    let got = sim.receive_messages("q", 10, ms(1000.0));
    assert_eq!(got.len(), 1);
    assert_eq!(&got[0].body[..], b"hi");
    for i in 0..5u8 {
        sim.send_message("q", vec![i], 0).unwrap();
    }
    let a = sim.receive_messages("q", 3, ms(1000.0));
    let b = sim.receive_messages("q", 3, ms(1000.0));
    assert_eq!((a.len(), b.len()), (3, 2));
    let mut all: Vec<u8> = a.iter().chain(&b).map(|m| m.body[0]).collect();
    all.sort();
    assert_eq!(all, vec![0, 1, 2, 3, 4]);
}

#[test]
fn messages_invisible_before_delivery_latency() {
    let sim = Simulator::new(SimConfig::default());
    let visible = sim.send_message("q", &b"x"[..], 100).unwrap();
    assert!(visible > 100);
    assert!(sim.receive_messages("q", 1, visible - 1).is_empty());
    assert_eq!(sim.receive_messages("q", 1, visible).len(), 1);
}

#[test]
fn redelivery_is_at_least_once() {
    let cfg = SimConfig {
        queue_redelivery_fraction: 1.0,
        ..SimConfig::default()
    };
    let sim = Simulator::new(cfg);
    sim.send_message("q", &b"x"[..], 0).unwrap();
    assert_eq!(sim.receive_messages("q", 1, ms(500.0)).len(), 1);
    assert_eq!(sim.receive_messages("q", 1, ms(5_000.0)).len(), 1);
}

#[test]
fn storage_accrual() {
    let sim = Simulator::new(SimConfig::default());
    sim.import_object("b", "k", Bytes::from(vec![0u8; 1 << 20]), StorageClass::Standard);
    sim.accrue_storage(MONTH_MICROS as SimTime);
    let l = sim.ledger();
    let q = l.quantity(CostCategory::StorageGibMo);
    assert!((q - 1.0 / 1024.0).abs() < 1e-12);
    // No double counting.
    sim.accrue_storage(MONTH_MICROS as SimTime);
    assert_eq!(sim.ledger().quantity(CostCategory::StorageGibMo), q);
}

#[test]
fn kv_store() {
    let sim = Simulator::new(SimConfig::default());
    assert_eq!(sim.kv_get("a", 0).0, None);
    sim.kv_put("a", &b"1"[..], 0);
    assert_eq!(sim.kv_get("a", 0).0.as_deref(), Some(&b"1"[..]));
    assert_eq!(sim.kv_entries("a").len(), 1);
    assert!(sim.kv_delete("a"));
}

fn scripted_run(faults: Option<FaultPlan>) -> (Vec<SimEvent>, CostLedger) {
    let sim = Arc::new(Simulator::with_faults(SimConfig::default(), faults));
    sim.import_object("b", "k", Bytes::from(vec![7u8; 4096]), StorageClass::Standard);
    for i in 0..20u64 {
        let entry: Entrypoint = Box::new(move |sim: &Simulator, ctx: InvocationCtx| {
            let mut t = ctx.start_time;
            if let Ok(r) = sim.get_object_range("b", "k", ByteRange::full(), t) {
                t = r.completed_at;
            }
            if let Ok(p) = sim.put_object("b", &format!("o{i}"), vec![1u8; 10], StorageClass::Hot, t)
            {
                t = p.completed_at;
            }
            InvocationOutcome::Finished(ctx.slowed_end(t))
        });
        sim.invoke(InvokeRequest::new(func("w"), "", i * 10_000), entry)
            .unwrap();
    }
    sim.run_until_idle();
    (sim.events(), sim.ledger())
}

#[test]
fn deterministic_timelines() {
    assert_eq!(scripted_run(None), scripted_run(None));
}

#[test]
fn zero_probability_fault_plan_is_neutral() {
    let plan = FaultPlan {
        straggler_fraction: 0.0,
        straggler_slowdown: 10.0,
        crash_fraction: 0.0,
        scope: FaultScope::All,
        rng_seed: 99,
    };
    assert_eq!(scripted_run(None), scripted_run(Some(plan)));
}

#[test]
fn crash_sends_failure_notice() {
    let plan = FaultPlan {
        crash_fraction: 1.0,
        scope: FaultScope::Invocation,
        ..FaultPlan::default()
    };
    let sim = Simulator::with_faults(SimConfig::default(), Some(plan));
    let ran = Arc::new(AtomicUsize::new(0));
    let r2 = ran.clone();
    let r = sim
        .invoke(
            InvokeRequest::new(func("w"), "", 0).tag("t1").on_failure("fail"),
            Box::new(move |_, ctx| {
                r2.fetch_add(1, Ordering::SeqCst);
                InvocationOutcome::Finished(ctx.start_time)
            }),
        )
        .unwrap();
    sim.run_until_idle();
    assert_eq!(ran.load(Ordering::SeqCst), 0);
    assert_eq!(sim.invocation(r.id).unwrap().state, InvocationState::Failed);
    let msgs = sim.receive_messages("fail", 10, u64::MAX / 2);
    let notice: FailureNotice = serde_json::from_slice(&msgs[0].body).unwrap();
    assert_eq!(notice.tag, "t1");
    assert_eq!(notice.invocation, r.id);
    // Exempt invocations are never crashed.
    let r = sim
        .invoke(
            InvokeRequest::new(func("w"), "", sim.now()).fault_exempt(),
            finish_after(1),
        )
        .unwrap();
    sim.run_until_idle();
    assert_eq!(sim.invocation(r.id).unwrap().state, InvocationState::Finished);
}

#[test]
fn storage_faults_surface_as_request_failed() {
    let plan = FaultPlan {
        crash_fraction: 1.0,
        scope: FaultScope::StorageRequest,
        ..FaultPlan::default()
    };
    let sim = Simulator::with_faults(SimConfig::default(), Some(plan));
    sim.import_object("b", "k", Bytes::from_static(b"x"), StorageClass::Standard);
    assert!(matches!(
        sim.get_object_range("b", "k", ByteRange::full(), 0),
        Err(SimError::RequestFailed { .. })
    ));
    assert!(matches!(
        sim.put_object("b", "k2", Bytes::new(), StorageClass::Standard, 0),
        Err(SimError::RequestFailed { .. })
    ));
    assert!(sim.peek_object("b", "k2").is_none());
}

#[test]
fn run_until_reports_stall() {
    let sim = Simulator::new(SimConfig::default());
    assert_eq!(sim.run_until(|| false), Err(SimError::Stalled));
}

#[test]
fn shared_across_threads() {
    let sim = Arc::new(Simulator::new(SimConfig::default()));
    std::thread::scope(|s| {
        for t in 0..4 {
            let sim = sim.clone();
            s.spawn(move || {
                for i in 0..50 {
                    sim.put_object("b", &format!("{t}/{i}"), vec![0u8; 8], StorageClass::Standard, 0)
                        .unwrap();
                }
            });
        }
    });
    assert_eq!(sim.list_objects("b", "", 0).keys.len(), 200);
}

#[test]
fn fork_copies_storage_only() {
    let sim = Simulator::new(SimConfig::default());
    sim.put_object("b", "k", &b"v"[..], StorageClass::Standard, 0)
        .unwrap();
    sim.kv_put("x", &b"y"[..], 0);
    let f = sim.fork_storage(SimConfig::default(), None);
    assert!(f.ledger().is_empty());
    assert_eq!(&f.peek_object("b", "k").unwrap().bytes[..], b"v");
    assert_eq!(f.kv_entries("").len(), 1);
}
