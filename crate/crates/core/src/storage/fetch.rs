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

//! Parallel range fetching with request hedging.
//!
//! Requests run on the caller's local timeline. Each attempt has a
//! first-byte latency drawn by the simulator; the transfer then occupies the
//! function's network link, which serves transfers one after another. An
//! attempt whose first byte has not arrived within the hedge timeout gets a
//! duplicate; the first completed copy wins.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use bytes::{Bytes, BytesMut};

use super::reader::{RangeRequestPlan, ReadError};
use crate::sim::{ms, transfer_micros, ByteRange, SimError, SimTime, Simulator, FUNCTION_NET_GBPS};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FetchOptions {
    pub parallelism: usize,
    pub min_timeout: SimTime,
    pub timeout_factor: f64,
    pub max_attempts: u32,
    pub bandwidth_gbps: f64,
}

impl Default for FetchOptions {
    fn default() -> Self {
        Self {
            parallelism: 8,
            min_timeout: ms(50.0),
            timeout_factor: 3.0,
            max_attempts: 4,
            bandwidth_gbps: FUNCTION_NET_GBPS,
        }
    }
}

/// Serial occupancy of one function's network link.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NicTimeline {
    free_at: SimTime,
}

impl NicTimeline {
    /// Reserves the link for `duration` starting no earlier than `ready`;
    /// returns the end of the reservation.
    pub fn reserve(&mut self, ready: SimTime, duration: SimTime) -> SimTime {
        let start = ready.max(self.free_at);
        self.free_at = start + duration;
        self.free_at
    }

    pub fn free_at(&self) -> SimTime {
        self.free_at
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FetchStats {
    pub requests: u64,
    pub bytes_requested: u64,
    pub hedges: u64,
    pub retries: u64,
    /// Ranges answered from already-held probe bytes.
    pub ranges_from_probe: u64,
}

impl std::ops::AddAssign for FetchStats {
    fn add_assign(&mut self, o: Self) {
        self.requests += o.requests;
        self.bytes_requested += o.bytes_requested;
        self.hedges += o.hedges;
        self.retries += o.retries;
        self.ranges_from_probe += o.ranges_from_probe;
    }
}

#[derive(Debug, Clone)]
pub struct FetchResult {
    /// One buffer per planned chunk.
    pub buffers: Vec<Bytes>,
    /// When each buffer became complete.
    pub ready_at: Vec<SimTime>,
    pub completed_at: SimTime,
    pub stats: FetchStats,
}

impl FetchResult {
    /// Completion time of the `i`-th planned row group.
    pub fn row_group_ready(&self, plan: &RangeRequestPlan, i: usize) -> SimTime {
        let n = plan.columns.len();
        if n == 0 {
            return self.completed_at;
        }
        self.ready_at[i * n..(i + 1) * n]
            .iter()
            .copied()
            .max()
            .unwrap_or(self.completed_at)
    }
}

/// Bytes already held by the caller, such as a footer tail probe.
#[derive(Debug, Clone, Copy)]
pub struct HeldBytes<'a> {
    pub bytes: &'a Bytes,
    pub offset: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Ev {
    /// First byte of an attempt arrives, or its failure is observed.
    FirstByte(usize),
    /// Transfer of an attempt is complete.
    Done(usize),
    /// Hedge timeout of an attempt expires.
    Deadline(usize),
}

struct Attempt {
    range: usize,
    outcome: Result<Bytes, SimError>,
    transfer: SimTime,
}

fn median(v: &[SimTime]) -> Option<SimTime> {
    if v.is_empty() {
        return None;
    }
    let mut v = v.to_vec();
    v.sort_unstable();
    Some(v[v.len() / 2])
}

struct Fetcher<'a> {
    sim: &'a Simulator,
    plan: &'a RangeRequestPlan,
    opts: &'a FetchOptions,
    attempts: Vec<Attempt>,
    events: BinaryHeap<Reverse<(SimTime, u64, Ev)>>,
    seq: u64,
    first_bytes: Vec<SimTime>,
    attempts_of: Vec<u32>,
    live_of: Vec<u32>,
    stats: FetchStats,
}

impl Fetcher<'_> {
    fn push(&mut self, t: SimTime, e: Ev) {
        self.seq += 1;
        self.events.push(Reverse((t, self.seq, e)));
    }

    fn timeout(&self) -> SimTime {
        median(&self.first_bytes)
            .map_or(0, |m| (m as f64 * self.opts.timeout_factor) as SimTime)
            .max(self.opts.min_timeout)
    }

    fn issue(&mut self, range: usize, t: SimTime) {
        let r = self.plan.ranges[range];
        let obj = &self.plan.object;
        self.attempts_of[range] += 1;
        self.live_of[range] += 1;
        self.stats.requests += 1;
        self.stats.bytes_requested += r.length;
        let res = self.sim.get_object_range(
            &obj.bucket,
            &obj.key,
            ByteRange::Bounded {
                offset: r.offset,
                len: r.length,
            },
            t,
        );
        let (outcome, first_byte_at, transfer) = match res {
            Ok(g) => (
                Ok(g.bytes),
                t + g.first_byte_us,
                transfer_micros(r.length, self.opts.bandwidth_gbps),
            ),
            Err(SimError::RequestFailed { at }) => (Err(SimError::RequestFailed { at }), at, 0),
            Err(e) => (Err(e), t, 0),
        };
        let deadline = t + self.timeout();
        let id = self.attempts.len();
        let ok = outcome.is_ok();
        self.attempts.push(Attempt {
            range,
            outcome,
            transfer,
        });
        self.push(first_byte_at, Ev::FirstByte(id));
        if ok && first_byte_at > deadline {
            self.push(deadline, Ev::Deadline(id));
        }
        if ok {
            self.first_bytes.push(first_byte_at - t);
        }
    }
}

/// Fetches every range of `plan` starting at local time `at`.
///
/// Ranges fully inside `held` are copied without a request. A range whose
/// first byte is overdue is requested again; at most `max_attempts` requests
/// are made per range.
pub fn fetch(
    sim: &Simulator,
    plan: &RangeRequestPlan,
    held: Option<HeldBytes<'_>>,
    at: SimTime,
    nic: &mut NicTimeline,
    opts: &FetchOptions,
) -> Result<FetchResult, ReadError> {
    let n = plan.ranges.len();
    let mut buffers: Vec<BytesMut> = plan
        .chunks
        .iter()
        .map(|c| BytesMut::zeroed(c.length as usize))
        .collect();
    let mut ready_at = vec![at; plan.chunks.len()];
    let mut done = vec![false; n];
    let mut queue: VecDeque<usize> = VecDeque::new();
    let mut f = Fetcher {
        sim,
        plan,
        opts,
        attempts: Vec::new(),
        events: BinaryHeap::new(),
        seq: 0,
        first_bytes: Vec::new(),
        attempts_of: vec![0; n],
        live_of: vec![0; n],
        stats: FetchStats::default(),
    };
    for (i, r) in plan.ranges.iter().enumerate() {
        if let Some(h) = held {
            let end = h.offset + h.bytes.len() as u64;
            if r.offset >= h.offset && r.offset + r.length <= end {
                let s = (r.offset - h.offset) as usize;
                let d = r.buffer_offset as usize;
                buffers[r.buffer][d..d + r.length as usize]
                    .copy_from_slice(&h.bytes[s..s + r.length as usize]);
                done[i] = true;
                f.stats.ranges_from_probe += 1;
                continue;
            }
        }
        queue.push_back(i);
    }
    let mut remaining = queue.len();
    // Ranges currently holding a parallelism slot.
    let mut active = 0usize;
    let mut now = at;
    let mut completed_at = at;
    let fail = |e: &SimError| ReadError::fetch_failed(&plan.object.bucket, &plan.object.key, e);

    while remaining > 0 {
        while active < opts.parallelism.max(1) {
            let Some(r) = queue.pop_front() else { break };
            active += 1;
            f.issue(r, now);
        }
        let Some(Reverse((t, _, ev))) = f.events.pop() else {
            break;
        };
        now = now.max(t);
        match ev {
            Ev::Deadline(a) => {
                let r = f.attempts[a].range;
                if !done[r] && f.attempts_of[r] < opts.max_attempts {
                    f.stats.hedges += 1;
                    f.issue(r, now);
                }
            }
            Ev::FirstByte(a) => {
                let r = f.attempts[a].range;
                if f.attempts[a].outcome.is_ok() {
                    if done[r] {
                        // A sibling already won; the duplicate is dropped.
                        f.live_of[r] -= 1;
                    } else {
                        let end = nic.reserve(now, f.attempts[a].transfer);
                        f.push(end, Ev::Done(a));
                    }
                    continue;
                }
                f.live_of[r] -= 1;
                if done[r] || f.live_of[r] > 0 {
                    continue;
                }
                let err = f.attempts[a].outcome.clone().expect_err("failed attempt");
                if !matches!(err, SimError::RequestFailed { .. }) || f.attempts_of[r] >= opts.max_attempts {
                    return Err(fail(&err));
                }
                f.stats.retries += 1;
                active -= 1;
                queue.push_front(r);
            }
            Ev::Done(a) => {
                let r = f.attempts[a].range;
                f.live_of[r] -= 1;
                if done[r] {
                    continue;
                }
                done[r] = true;
                remaining -= 1;
                active -= 1;
                let rr = plan.ranges[r];
                let bytes = f.attempts[a].outcome.as_ref().expect("successful attempt");
                let d = rr.buffer_offset as usize;
                buffers[rr.buffer][d..d + rr.length as usize].copy_from_slice(bytes);
                ready_at[rr.buffer] = ready_at[rr.buffer].max(now);
                completed_at = completed_at.max(now);
            }
        }
    }
    if remaining > 0 {
        return Err(ReadError::FetchFailed {
            bucket: plan.object.bucket.clone(),
            key: plan.object.key.clone(),
            reason: "attempt budget exhausted".into(),
        });
    }
    Ok(FetchResult {
        buffers: buffers.into_iter().map(BytesMut::freeze).collect(),
        ready_at,
        completed_at,
        stats: f.stats,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::sim::{CostCategory, FaultPlan, FaultScope, SimConfig, StorageClass};
    use crate::storage::format::{read_file_footer, write_columnar_file, WriteOptions};
    use crate::storage::reader::{plan_ranges, ObjectRef};
    use crate::storage::types::{DataType, Field, RecordBatch, ScalarValue, Schema};

    fn setup(sim: &Simulator) -> (Bytes, RangeRequestPlan) {
        let schema = Arc::new(Schema::new(vec![
            Field::new("a", DataType::Int64, false),
            Field::new("b", DataType::Utf8, false),
        ]));
        let rows: Vec<Vec<ScalarValue>> = (0..4000)
            .map(|i| vec![ScalarValue::Int64(i), ScalarValue::Utf8(format!("row-{i}"))])
            .collect();
        let batch = RecordBatch::from_rows(schema.clone(), &rows).unwrap();
        let opts = WriteOptions {
            row_group_rows: 2000,
            ..WriteOptions::default()
        };
        let file = Bytes::from(write_columnar_file([&batch], schema, opts).unwrap());
        sim.import_object("b", "f", file.clone(), StorageClass::Standard);
        let footer = read_file_footer(&file).unwrap();
        let plan = plan_ranges(
            &ObjectRef::new("b", "f"),
            &footer,
            &["a".into(), "b".into()],
            None,
            &[],
            1 << 20,
        )
        .unwrap();
        assert_eq!(plan.ranges.len(), 4);
        (file, plan)
    }

    fn expected(file: &Bytes, plan: &RangeRequestPlan) -> Vec<Bytes> {
        plan.chunks
            .iter()
            .map(|c| file.slice(c.offset as usize..(c.offset + c.length) as usize))
            .collect()
    }

    #[test]
    fn fault_free_fetch_bills_one_request_per_range() {
        let sim = Simulator::new(SimConfig::default());
        let (file, plan) = setup(&sim);
        let mark = sim.ledger_len();
        let mut nic = NicTimeline::default();
        let opts = FetchOptions {
            // No hedging: isolate the request count.
            min_timeout: ms(1e9),
            ..FetchOptions::default()
        };
        let r = fetch(&sim, &plan, None, 0, &mut nic, &opts).unwrap();
        assert_eq!(r.buffers, expected(&file, &plan));
        assert_eq!(sim.ledger_since(mark).quantity(CostCategory::RequestsRead), 4.0);
        assert!(r.completed_at > 0);
    }

    #[test]
    fn straggling_range_is_hedged() {
        let sim = Simulator::new(SimConfig::default());
        let (file, plan) = setup(&sim);
        sim.inject_read_straggler("b", "f", 10.0, 1);
        let mark = sim.ledger_len();
        let mut nic = NicTimeline::default();
        let r = fetch(&sim, &plan, None, 0, &mut nic, &FetchOptions::default()).unwrap();
        assert_eq!(r.buffers, expected(&file, &plan));
        assert!(r.stats.hedges >= 1);
        assert!(sim.ledger_since(mark).quantity(CostCategory::RequestsRead) >= 5.0);
    }

    #[test]
    fn missing_object_fails() {
        let sim = Simulator::new(SimConfig::default());
        let (_, plan) = setup(&sim);
        sim.delete_object("b", "f", 0);
        let mut nic = NicTimeline::default();
        let err = fetch(&sim, &plan, None, 0, &mut nic, &FetchOptions::default()).unwrap_err();
        assert!(matches!(err, ReadError::FetchFailed { .. }));
    }

    #[test]
    fn injected_failures_are_transparent() {
        for seed in 0..20 {
            let plan_f = FaultPlan {
                straggler_fraction: 0.3,
                straggler_slowdown: 10.0,
                crash_fraction: 0.1,
                scope: FaultScope::StorageRequest,
                rng_seed: seed,
            };
            let sim = Simulator::with_faults(SimConfig::default(), Some(plan_f));
            let (file, plan) = setup(&sim);
            let mut nic = NicTimeline::default();
            let r = fetch(&sim, &plan, None, 0, &mut nic, &FetchOptions::default()).unwrap();
            assert_eq!(r.buffers, expected(&file, &plan));
        }
    }

    #[test]
    fn always_failing_storage_exhausts_attempts() {
        let plan_f = FaultPlan {
            crash_fraction: 1.0,
            scope: FaultScope::StorageRequest,
            ..FaultPlan::default()
        };
        let sim = Simulator::with_faults(SimConfig::default(), Some(plan_f));
        let (_, plan) = setup(&sim);
        let mut nic = NicTimeline::default();
        let mark = sim.ledger_len();
        assert!(fetch(&sim, &plan, None, 0, &mut nic, &FetchOptions::default()).is_err());
        // Never more than max_attempts requests for the failing range.
        assert!(sim.ledger_since(mark).quantity(CostCategory::RequestsRead) <= 4.0 * 4.0);
    }

    #[test]
    fn held_bytes_avoid_requests() {
        let sim = Simulator::new(SimConfig::default());
        let (file, plan) = setup(&sim);
        let mark = sim.ledger_len();
        let mut nic = NicTimeline::default();
        let held = HeldBytes {
            bytes: &file,
            offset: 0,
        };
        let r = fetch(&sim, &plan, Some(held), 0, &mut nic, &FetchOptions::default()).unwrap();
        assert_eq!(r.buffers, expected(&file, &plan));
        assert_eq!(r.stats.ranges_from_probe, 4);
        assert_eq!(sim.ledger_len(), mark);
    }

    #[test]
    fn nic_serializes_transfers() {
        let mut nic = NicTimeline::default();
        assert_eq!(nic.reserve(10, 5), 15);
        assert_eq!(nic.reserve(12, 5), 20);
        assert_eq!(nic.reserve(30, 1), 31);
    }
}
