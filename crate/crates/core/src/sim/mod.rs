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

//! Deterministic discrete-event simulation of a serverless substrate: a
//! function platform, an object store with two storage classes, a message
//! queue and a key-value store, all billed into one [`CostLedger`].
//!
//! All state lives behind one lock; every public operation is atomic with
//! respect to the timeline. Operations take an explicit `at` so callers that
//! run ahead of the global clock (a worker advancing its own local time) get
//! latencies and bills stamped at the right moment.

pub mod clock;
pub mod config;
pub mod faults;
pub mod latency;
pub mod ledger;
pub mod pricing;

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;

use bytes::Bytes;
use parking_lot::Mutex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use clock::{EventCallback, EventId, SimClock};
pub use config::{ConfigFile, SimConfig};
pub use faults::{FaultDraw, FaultPlan, FaultScope};
pub use latency::{LatencyDist, LatencyModel};
pub use ledger::{total_cost, CostCategory, CostLedger, LedgerEntry};
pub use pricing::{Cents, FunctionSpec, PriceSheet, StorageClass, FUNCTION_NET_GBPS, GIB};

/// Simulated time in microseconds.
pub type SimTime = u64;

pub const MONTH_MICROS: f64 = 30.0 * 24.0 * 3600.0 * 1e6;

pub fn ms(v: f64) -> SimTime {
    (v * 1000.0).round().max(0.0) as SimTime
}

pub fn to_ms(t: SimTime) -> f64 {
    t as f64 / 1000.0
}

/// Microseconds to move `bytes` over a link of `gbps`.
pub fn transfer_micros(bytes: u64, gbps: f64) -> SimTime {
    ((bytes as f64 * 8.0) / (gbps * 1e3)).ceil() as SimTime
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("admission quota exceeded: {active} active invocations, quota {quota}")]
    QuotaExceeded { active: usize, quota: usize },
    #[error("payload of {size} bytes exceeds limit of {limit}")]
    PayloadTooLarge { size: usize, limit: usize },
    #[error("no such key: {bucket}/{key}")]
    NoSuchKey { bucket: String, key: String },
    #[error("range {range:?} not satisfiable for object of {size} bytes")]
    RangeUnsatisfiable { range: ByteRange, size: u64 },
    #[error("request failed at {at}us")]
    RequestFailed { at: SimTime },
    #[error("invalid function: {0}")]
    InvalidFunction(String),
    #[error("unknown invocation {0}")]
    UnknownInvocation(u64),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("event queue drained before the awaited condition held")]
    Stalled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct InvocationId(pub u64);

impl fmt::Display for InvocationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "inv-{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartKind {
    Cold,
    Warm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvocationState {
    Pending,
    Running,
    Straggling,
    Finished,
    Failed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Invocation {
    pub id: InvocationId,
    pub function: FunctionSpec,
    pub payload: Bytes,
    pub start_kind: StartKind,
    pub state: InvocationState,
    pub submit_time: SimTime,
    pub start_time: SimTime,
    pub end_time: Option<SimTime>,
    pub parent: Option<InvocationId>,
    pub tag: String,
}

/// Parameters of one asynchronous invocation.
#[derive(Debug, Clone)]
pub struct InvokeRequest {
    pub function: FunctionSpec,
    pub payload: Bytes,
    pub at: SimTime,
    pub parent: Option<InvocationId>,
    /// Opaque label echoed in failure notices and the event log.
    pub tag: String,
    /// Queue that receives a [`FailureNotice`] if the invocation crashes.
    pub on_failure: Option<String>,
    /// Excluded from fault injection.
    pub fault_exempt: bool,
}

impl InvokeRequest {
    pub fn new(function: FunctionSpec, payload: impl Into<Bytes>, at: SimTime) -> Self {
        Self {
            function,
            payload: payload.into(),
            at,
            parent: None,
            tag: String::new(),
            on_failure: None,
            fault_exempt: false,
        }
    }

    pub fn parent(mut self, parent: Option<InvocationId>) -> Self {
        self.parent = parent;
        self
    }

    pub fn tag(mut self, tag: impl Into<String>) -> Self {
        self.tag = tag.into();
        self
    }

    pub fn on_failure(mut self, queue: impl Into<String>) -> Self {
        self.on_failure = Some(queue.into());
        self
    }

    pub fn fault_exempt(mut self) -> Self {
        self.fault_exempt = true;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvokeReceipt {
    pub id: InvocationId,
    pub start_kind: StartKind,
    pub start_time: SimTime,
    /// When the caller is free to issue its next call.
    pub api_return: SimTime,
}

/// What the entrypoint sees when its invocation starts.
#[derive(Debug, Clone)]
pub struct InvocationCtx {
    pub id: InvocationId,
    pub function: FunctionSpec,
    pub payload: Bytes,
    pub submit_time: SimTime,
    pub start_time: SimTime,
    /// Multiplier the entrypoint must apply to its own run time.
    pub slowdown: f64,
    pub tag: String,
}

impl InvocationCtx {
    /// Effective end time of a run that would take `raw_end - start` unslowed.
    pub fn slowed_end(&self, raw_end: SimTime) -> SimTime {
        let d = raw_end.saturating_sub(self.start_time) as f64 * self.slowdown;
        self.start_time + d.round() as SimTime
    }
}

pub enum InvocationOutcome {
    Finished(SimTime),
    /// The entrypoint will call [`Simulator::complete_invocation`] later.
    Detached,
}

pub type Entrypoint = Box<dyn FnOnce(&Simulator, InvocationCtx) -> InvocationOutcome + Send>;

/// Message delivered to an invocation's failure queue when it crashes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureNotice {
    pub invocation: InvocationId,
    pub tag: String,
    pub at: SimTime,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ByteRange {
    Bounded { offset: u64, len: u64 },
    /// From `offset` to the end of the object.
    From { offset: u64 },
    /// The last `len` bytes (the whole object if shorter).
    Suffix { len: u64 },
}

impl ByteRange {
    pub fn full() -> Self {
        ByteRange::From { offset: 0 }
    }

    fn resolve(&self, size: u64) -> Option<(u64, u64)> {
        match *self {
            ByteRange::Bounded { offset, len } => {
                let end = offset.checked_add(len)?;
                (end <= size).then_some((offset, len))
            }
            ByteRange::From { offset } => (offset <= size).then(|| (offset, size - offset)),
            ByteRange::Suffix { len } => {
                let len = len.min(size);
                Some((size - len, len))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GetReceipt {
    pub bytes: Bytes,
    pub offset: u64,
    pub object_size: u64,
    pub class: StorageClass,
    pub first_byte_us: SimTime,
    pub transfer_us: SimTime,
    pub completed_at: SimTime,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PutReceipt {
    pub latency_us: SimTime,
    pub completed_at: SimTime,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ListReceipt {
    pub keys: Vec<String>,
    pub completed_at: SimTime,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoredObject {
    pub bucket: String,
    pub key: String,
    pub bytes: Bytes,
    pub class: StorageClass,
    pub created_at: SimTime,
    accrued_until: SimTime,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueueMessage {
    pub queue: String,
    pub body: Bytes,
    pub enqueue_time: SimTime,
    pub visible_at: SimTime,
    pub message_id: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SimEventKind {
    Invoke {
        id: InvocationId,
        function: String,
        parent: Option<InvocationId>,
        tag: String,
        start_kind: StartKind,
        start_at: SimTime,
    },
    Start { id: InvocationId },
    Finish { id: InvocationId },
    Crash { id: InvocationId },
    Get { bucket: String, key: String, bytes: u64, ok: bool },
    Put { bucket: String, key: String, bytes: u64, ok: bool },
    Delete { bucket: String, key: String },
    List { bucket: String, prefix: String, keys: usize },
    Send { queue: String },
    Receive { queue: String, count: usize },
    KvGet { key: String, hit: bool },
    KvPut { key: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimEvent {
    pub at: SimTime,
    pub kind: SimEventKind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum SandboxState {
    Busy,
    Idle(SimTime),
    Gone,
}

struct InvocationRecord {
    info: Invocation,
    sandbox: usize,
    fault: FaultDraw,
    on_failure: Option<String>,
}

struct SimState {
    clock: SimClock,
    rng: ChaCha8Rng,
    fault_rng: ChaCha8Rng,
    queue_rng: ChaCha8Rng,
    faults: Option<FaultPlan>,
    invocations: Vec<InvocationRecord>,
    active: usize,
    sandboxes: HashMap<String, Vec<SandboxState>>,
    buckets: BTreeMap<String, BTreeMap<String, StoredObject>>,
    kv: BTreeMap<String, Bytes>,
    queues: HashMap<String, VecDeque<QueueMessage>>,
    ledger: CostLedger,
    events: Vec<SimEvent>,
    next_message: u64,
    next_name: u64,
    injected: Vec<InjectedStraggler>,
}

struct InjectedStraggler {
    bucket: String,
    key: String,
    slowdown: f64,
    remaining: u32,
}

impl SimState {
    fn log(&mut self, at: SimTime, kind: SimEventKind) {
        self.events.push(SimEvent { at, kind });
    }

    fn draw(&mut self, applies: impl Fn(FaultScope) -> bool, exempt: bool) -> FaultDraw {
        let Some(plan) = &self.faults else {
            return FaultDraw::NONE;
        };
        let (crash_u, straggle_u): (f64, f64) = (self.fault_rng.gen(), self.fault_rng.gen());
        if exempt || !applies(plan.scope) {
            return FaultDraw::NONE;
        }
        FaultDraw {
            crash: crash_u < plan.crash_fraction,
            slowdown: if straggle_u < plan.straggler_fraction {
                plan.straggler_slowdown
            } else {
                1.0
            },
        }
    }

    fn accrue_object(obj: &mut StoredObject, at: SimTime) -> f64 {
        let span = at.saturating_sub(obj.accrued_until);
        obj.accrued_until = obj.accrued_until.max(at);
        obj.bytes.len() as f64 / GIB * span as f64 / MONTH_MICROS
    }
}

/// Shared handle to the simulated cloud. Cheap to share behind an `Arc`.
pub struct Simulator {
    config: SimConfig,
    state: Mutex<SimState>,
    driver: Mutex<()>,
}

impl fmt::Debug for Simulator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Simulator")
            .field("now", &self.now())
            .finish_non_exhaustive()
    }
}

impl Simulator {
    pub fn new(config: SimConfig) -> Self {
        Self::with_faults(config, None)
    }

    pub fn with_faults(config: SimConfig, faults: Option<FaultPlan>) -> Self {
        let seed = config.seed;
        let fault_seed = faults.as_ref().map_or(0, |f| f.rng_seed);
        Self {
            state: Mutex::new(SimState {
                clock: SimClock::new(),
                rng: ChaCha8Rng::seed_from_u64(seed),
                fault_rng: ChaCha8Rng::seed_from_u64(fault_seed),
                queue_rng: ChaCha8Rng::seed_from_u64(seed ^ 0x5157_5155_4555),
                faults,
                invocations: Vec::new(),
                active: 0,
                sandboxes: HashMap::new(),
                buckets: BTreeMap::new(),
                kv: BTreeMap::new(),
                queues: HashMap::new(),
                ledger: CostLedger::new(),
                events: Vec::new(),
                next_message: 0,
                next_name: 0,
                injected: Vec::new(),
            }),
            config,
            driver: Mutex::new(()),
        }
    }

    /// A fresh simulator (new clock, ledger, sandboxes and queues) over a copy
    /// of this one's objects and key-value items. Copies are not billed.
    pub fn fork_storage(&self, config: SimConfig, faults: Option<FaultPlan>) -> Simulator {
        let fork = Simulator::with_faults(config, faults);
        {
            let src = self.state.lock();
            let mut dst = fork.state.lock();
            for (bucket, objects) in &src.buckets {
                let b = dst.buckets.entry(bucket.clone()).or_default();
                for (key, obj) in objects {
                    let mut obj = obj.clone();
                    obj.created_at = 0;
                    obj.accrued_until = 0;
                    b.insert(key.clone(), obj);
                }
            }
            dst.kv = src.kv.clone();
            // Names in the copied storage stay unique.
            dst.next_name = src.next_name;
        }
        fork
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn fault_plan(&self) -> Option<FaultPlan> {
        self.state.lock().faults.clone()
    }

    pub fn now(&self) -> SimTime {
        self.state.lock().clock.now()
    }

    /// Deterministic unique name such as `q-3`.
    pub fn next_name(&self, prefix: &str) -> String {
        let mut st = self.state.lock();
        st.next_name += 1;
        format!("{prefix}-{}", st.next_name)
    }

    /// Last number handed out by [`Simulator::next_name`].
    pub fn name_counter(&self) -> u64 {
        self.state.lock().next_name
    }

    /// Ensures later names are numbered above `n`, e.g. when storage was
    /// restored from an earlier session that already used those names.
    pub fn reserve_names(&self, n: u64) {
        let mut st = self.state.lock();
        st.next_name = st.next_name.max(n);
    }

    // ---- event loop -------------------------------------------------------

    pub fn schedule(&self, at: SimTime, callback: EventCallback) -> EventId {
        self.state.lock().clock.schedule(at, callback)
    }

    pub fn cancel(&self, id: EventId) -> bool {
        self.state.lock().clock.cancel(id)
    }

    pub fn pending_events(&self) -> usize {
        self.state.lock().clock.pending()
    }

    /// Fires the earliest pending event. Returns false when none is left.
    fn step_locked(&self) -> bool {
        let next = self.state.lock().clock.pop();
        match next {
            Some((_, cb)) => {
                cb(self);
                true
            }
            None => false,
        }
    }

    /// Drives the timeline until `done` holds. Safe to call from several
    /// threads: events fire one at a time, in time order.
    pub fn run_until(&self, mut done: impl FnMut() -> bool) -> Result<(), SimError> {
        loop {
            let _driver = self.driver.lock();
            if done() {
                return Ok(());
            }
            if !self.step_locked() {
                return if done() { Ok(()) } else { Err(SimError::Stalled) };
            }
        }
    }

    pub fn run_until_idle(&self) {
        let _driver = self.driver.lock();
        while self.step_locked() {}
    }

    // ---- function platform -------------------------------------------------

    pub fn invoke(&self, req: InvokeRequest, entry: Entrypoint) -> Result<InvokeReceipt, SimError> {
        let limit = self.config.payload_limit_bytes;
        if req.payload.len() > limit {
            return Err(SimError::PayloadTooLarge {
                size: req.payload.len(),
                limit,
            });
        }
        let keep_alive = self.config.warm_keep_alive_s * 1_000_000;
        let mut st = self.state.lock();
        let at = req.at;
        if st.active >= self.config.admission_quota {
            return Err(SimError::QuotaExceeded {
                active: st.active,
                quota: self.config.admission_quota,
            });
        }
        let pool = st.sandboxes.entry(req.function.name.clone()).or_default();
        // Most recently idled sandbox first.
        let mut best: Option<(usize, SimTime)> = None;
        for (i, s) in pool.iter_mut().enumerate() {
            if let SandboxState::Idle(since) = *s {
                if since <= at && at - since > keep_alive {
                    *s = SandboxState::Gone;
                } else if since <= at && best.map_or(true, |(_, b)| since >= b) {
                    best = Some((i, since));
                }
            }
        }
        let (sandbox, start_kind) = match best {
            Some((i, _)) => {
                pool[i] = SandboxState::Busy;
                (i, StartKind::Warm)
            }
            None => {
                pool.push(SandboxState::Busy);
                (pool.len() - 1, StartKind::Cold)
            }
        };
        let lat = &self.config.latency;
        let delay = match start_kind {
            StartKind::Cold => lat.lambda_cold_start.sample(&mut st.rng),
            StartKind::Warm => lat.lambda_warm_start.sample(&mut st.rng),
        };
        let api = lat.lambda_invoke_api.sample(&mut st.rng);
        let fault = st.draw(FaultScope::invocations, req.fault_exempt);
        let id = InvocationId(st.invocations.len() as u64);
        let start_time = at + delay;
        st.invocations.push(InvocationRecord {
            info: Invocation {
                id,
                function: req.function.clone(),
                payload: req.payload.clone(),
                start_kind,
                state: InvocationState::Pending,
                submit_time: at,
                start_time,
                end_time: None,
                parent: req.parent,
                tag: req.tag.clone(),
            },
            sandbox,
            fault,
            on_failure: req.on_failure.clone(),
        });
        st.active += 1;
        st.log(
            at,
            SimEventKind::Invoke {
                id,
                function: req.function.name.clone(),
                parent: req.parent,
                tag: req.tag,
                start_kind,
                start_at: start_time,
            },
        );
        st.clock.schedule(
            start_time,
            Box::new(move |sim: &Simulator| sim.start_invocation(id, entry)),
        );
        Ok(InvokeReceipt {
            id,
            start_kind,
            start_time,
            api_return: at + api,
        })
    }

    fn start_invocation(&self, id: InvocationId, entry: Entrypoint) {
        let (ctx, crash) = {
            let mut st = self.state.lock();
            let rec = &mut st.invocations[id.0 as usize];
            let crash = rec.fault.crash;
            rec.info.state = if rec.fault.slowdown > 1.0 {
                InvocationState::Straggling
            } else {
                InvocationState::Running
            };
            let ctx = InvocationCtx {
                id,
                function: rec.info.function.clone(),
                payload: rec.info.payload.clone(),
                submit_time: rec.info.submit_time,
                start_time: rec.info.start_time,
                slowdown: rec.fault.slowdown,
                tag: rec.info.tag.clone(),
            };
            let at = ctx.start_time;
            st.log(at, SimEventKind::Start { id });
            (ctx, crash)
        };
        if crash {
            self.crash_invocation(id, ctx.start_time);
            return;
        }
        match entry(self, ctx) {
            InvocationOutcome::Finished(end) => self.complete_invocation(id, end),
            InvocationOutcome::Detached => {}
        }
    }

    fn crash_invocation(&self, id: InvocationId, at: SimTime) {
        let end = at + 1_000;
        let notice = {
            let mut st = self.state.lock();
            let rec = &mut st.invocations[id.0 as usize];
            rec.info.state = InvocationState::Failed;
            rec.info.end_time = Some(end);
            let function = rec.info.function.clone();
            let sandbox = rec.sandbox;
            let notice = rec.on_failure.clone().map(|q| {
                (
                    q,
                    FailureNotice {
                        invocation: id,
                        tag: rec.info.tag.clone(),
                        at: end,
                        reason: "function crashed".into(),
                    },
                )
            });
            if let Some(pool) = st.sandboxes.get_mut(&function.name) {
                pool[sandbox] = SandboxState::Gone;
            }
            st.active -= 1;
            let cost = self.config.prices.compute_cost(function.memory_mib, 1_000);
            let gib_s = function.memory_mib as f64 / 1024.0 * 0.001;
            st.ledger.record(end, CostCategory::ComputeGibS, gib_s, cost);
            st.log(end, SimEventKind::Crash { id });
            notice
        };
        if let Some((queue, notice)) = notice {
            let body = serde_json::to_vec(&notice).expect("notice serializes");
            // Failure notices are small; a size error here is impossible.
            let _ = self.send_message(&queue, body, end);
        }
    }

    /// Marks a detached invocation finished at `end` (billing happens then).
    pub fn complete_invocation(&self, id: InvocationId, end: SimTime) {
        self.schedule(
            end,
            Box::new(move |sim: &Simulator| sim.finish_invocation(id, end)),
        );
    }

    fn finish_invocation(&self, id: InvocationId, end: SimTime) {
        let mut st = self.state.lock();
        let rec = &mut st.invocations[id.0 as usize];
        if matches!(
            rec.info.state,
            InvocationState::Finished | InvocationState::Failed
        ) {
            return;
        }
        let end = end.max(rec.info.start_time);
        rec.info.state = InvocationState::Finished;
        rec.info.end_time = Some(end);
        let billed = (end - rec.info.start_time).div_ceil(1_000).max(1) * 1_000;
        let function = rec.info.function.clone();
        let sandbox = rec.sandbox;
        if let Some(pool) = st.sandboxes.get_mut(&function.name) {
            pool[sandbox] = SandboxState::Idle(end);
        }
        st.active -= 1;
        let cost = self.config.prices.compute_cost(function.memory_mib, billed);
        let gib_s = function.memory_mib as f64 / 1024.0 * billed as f64 / 1e6;
        st.ledger.record(end, CostCategory::ComputeGibS, gib_s, cost);
        st.log(end, SimEventKind::Finish { id });
    }

    pub fn invocation(&self, id: InvocationId) -> Option<Invocation> {
        self.state
            .lock()
            .invocations
            .get(id.0 as usize)
            .map(|r| r.info.clone())
    }

    pub fn invocations(&self) -> Vec<Invocation> {
        self.state
            .lock()
            .invocations
            .iter()
            .map(|r| r.info.clone())
            .collect()
    }

    pub fn active_invocations(&self) -> usize {
        self.state.lock().active
    }

    // ---- object storage ----------------------------------------------------

    fn storage_latency(&self, st: &mut SimState, class: StorageClass, write: bool) -> SimTime {
        let l = &self.config.latency;
        let dist = match (class, write) {
            (StorageClass::Standard, false) => &l.standard_read,
            (StorageClass::Standard, true) => &l.standard_write,
            (StorageClass::Hot, false) => &l.hot_read,
            (StorageClass::Hot, true) => &l.hot_write,
        };
        dist.sample(&mut st.rng)
    }

    pub fn put_object(
        &self,
        bucket: &str,
        key: &str,
        bytes: impl Into<Bytes>,
        class: StorageClass,
        at: SimTime,
    ) -> Result<PutReceipt, SimError> {
        let bytes: Bytes = bytes.into();
        let size = bytes.len() as u64;
        let mut st = self.state.lock();
        let first = self.storage_latency(&mut st, class, true);
        let fault = st.draw(FaultScope::storage_requests, false);
        let latency = (first as f64 * fault.slowdown).round() as SimTime
            + transfer_micros(size, FUNCTION_NET_GBPS);
        let done = at + latency;
        let prices = *self.config.prices.storage(class);
        st.ledger.record(
            at,
            CostCategory::RequestsWrite,
            1.0,
            Cents::per_million(1, prices.write_per_million),
        );
        if fault.crash {
            st.log(
                at,
                SimEventKind::Put {
                    bucket: bucket.into(),
                    key: key.into(),
                    bytes: size,
                    ok: false,
                },
            );
            return Err(SimError::RequestFailed { at: done });
        }
        if prices.transfer_write_per_gib > 0.0 {
            st.ledger.record(
                at,
                CostCategory::TransferGib,
                size as f64 / GIB,
                PriceSheet::transfer_cost(prices.transfer_write_per_gib, size),
            );
        }
        let previous = st
            .buckets
            .entry(bucket.to_string())
            .or_default()
            .insert(
                key.to_string(),
                StoredObject {
                    bucket: bucket.into(),
                    key: key.into(),
                    bytes,
                    class,
                    created_at: done,
                    accrued_until: done,
                },
            );
        if let Some(mut old) = previous {
            let gib_mo = SimState::accrue_object(&mut old, done);
            if gib_mo > 0.0 {
                let price = self.config.prices.storage(old.class).storage_per_gib_month;
                st.ledger.record(
                    done,
                    CostCategory::StorageGibMo,
                    gib_mo,
                    Cents::from_cents(gib_mo * price),
                );
            }
        }
        st.log(
            at,
            SimEventKind::Put {
                bucket: bucket.into(),
                key: key.into(),
                bytes: size,
                ok: true,
            },
        );
        Ok(PutReceipt {
            latency_us: latency,
            completed_at: done,
        })
    }

    pub fn get_object_range(
        &self,
        bucket: &str,
        key: &str,
        range: ByteRange,
        at: SimTime,
    ) -> Result<GetReceipt, SimError> {
        let mut st = self.state.lock();
        let obj = st
            .buckets
            .get(bucket)
            .and_then(|b| b.get(key))
            .map(|o| (o.bytes.clone(), o.class));
        let class = obj.as_ref().map_or(StorageClass::Standard, |o| o.1);
        let prices = *self.config.prices.storage(class);
        let first = self.storage_latency(&mut st, class, false);
        let fault = st.draw(FaultScope::storage_requests, false);
        let mut slowdown = fault.slowdown;
        if let Some(inj) = st
            .injected
            .iter_mut()
            .find(|i| i.remaining > 0 && i.bucket == bucket && i.key == key)
        {
            inj.remaining -= 1;
            slowdown *= inj.slowdown;
        }
        let first = (first as f64 * slowdown).round() as SimTime;
        st.ledger.record(
            at,
            CostCategory::RequestsRead,
            1.0,
            Cents::per_million(1, prices.read_per_million),
        );
        let log = |st: &mut SimState, bytes: u64, ok: bool| {
            st.log(
                at,
                SimEventKind::Get {
                    bucket: bucket.into(),
                    key: key.into(),
                    bytes,
                    ok,
                },
            )
        };
        let Some((data, class)) = obj else {
            log(&mut st, 0, false);
            return Err(SimError::NoSuchKey {
                bucket: bucket.into(),
                key: key.into(),
            });
        };
        let size = data.len() as u64;
        let Some((offset, len)) = range.resolve(size) else {
            log(&mut st, 0, false);
            return Err(SimError::RangeUnsatisfiable { range, size });
        };
        if fault.crash {
            log(&mut st, 0, false);
            return Err(SimError::RequestFailed { at: at + first });
        }
        if prices.transfer_read_per_gib > 0.0 && len > 0 {
            st.ledger.record(
                at,
                CostCategory::TransferGib,
                len as f64 / GIB,
                PriceSheet::transfer_cost(prices.transfer_read_per_gib, len),
            );
        }
        log(&mut st, len, true);
        let transfer = transfer_micros(len, FUNCTION_NET_GBPS);
        Ok(GetReceipt {
            bytes: data.slice(offset as usize..(offset + len) as usize),
            offset,
            object_size: size,
            class,
            first_byte_us: first,
            transfer_us: transfer,
            completed_at: at + first + transfer,
        })
    }

    /// Lexicographically ordered keys under `prefix`; one read request is
    /// billed per started page of 1,000 keys.
    pub fn list_objects(&self, bucket: &str, prefix: &str, at: SimTime) -> ListReceipt {
        let mut st = self.state.lock();
        let keys: Vec<String> = st
            .buckets
            .get(bucket)
            .map(|b| {
                b.range(prefix.to_string()..)
                    .take_while(|(k, _)| k.starts_with(prefix))
                    .map(|(k, _)| k.clone())
                    .collect()
            })
            .unwrap_or_default();
        let pages = keys.len().div_ceil(1_000).max(1) as u64;
        let price = self.config.prices.standard.read_per_million;
        let mut done = at;
        for _ in 0..pages {
            done += self.config.latency.standard_read.sample(&mut st.rng);
        }
        st.ledger.record(
            at,
            CostCategory::RequestsRead,
            pages as f64,
            Cents::per_million(pages, price),
        );
        st.log(
            at,
            SimEventKind::List {
                bucket: bucket.into(),
                prefix: prefix.into(),
                keys: keys.len(),
            },
        );
        ListReceipt {
            keys,
            completed_at: done,
        }
    }

    pub fn delete_object(&self, bucket: &str, key: &str, at: SimTime) -> bool {
        let mut st = self.state.lock();
        let removed = st.buckets.get_mut(bucket).and_then(|b| b.remove(key));
        let Some(mut obj) = removed else {
            return false;
        };
        let gib_mo = SimState::accrue_object(&mut obj, at);
        if gib_mo > 0.0 {
            let price = self.config.prices.storage(obj.class).storage_per_gib_month;
            st.ledger.record(
                at,
                CostCategory::StorageGibMo,
                gib_mo,
                Cents::from_cents(gib_mo * price),
            );
        }
        st.log(
            at,
            SimEventKind::Delete {
                bucket: bucket.into(),
                key: key.into(),
            },
        );
        true
    }

    /// Charges storage-months for every object up to `at`.
    pub fn accrue_storage(&self, at: SimTime) {
        let mut st = self.state.lock();
        let mut per_class: BTreeMap<StorageClass, f64> = BTreeMap::new();
        for objects in st.buckets.values_mut() {
            for obj in objects.values_mut() {
                *per_class.entry(obj.class).or_default() += SimState::accrue_object(obj, at);
            }
        }
        for (class, gib_mo) in per_class {
            if gib_mo > 0.0 {
                let price = self.config.prices.storage(class).storage_per_gib_month;
                st.ledger.record(
                    at,
                    CostCategory::StorageGibMo,
                    gib_mo,
                    Cents::from_cents(gib_mo * price),
                );
            }
        }
    }

    /// Slows the next `count` reads of one object by `slowdown`.
    pub fn inject_read_straggler(&self, bucket: &str, key: &str, slowdown: f64, count: u32) {
        self.state.lock().injected.push(InjectedStraggler {
            bucket: bucket.into(),
            key: key.into(),
            slowdown,
            remaining: count,
        });
    }

    /// Unbilled inspection, for tests and tooling.
    pub fn peek_object(&self, bucket: &str, key: &str) -> Option<StoredObject> {
        self.state
            .lock()
            .buckets
            .get(bucket)
            .and_then(|b| b.get(key))
            .cloned()
    }

    /// Unbilled bulk load of pre-existing data.
    pub fn import_object(&self, bucket: &str, key: &str, bytes: Bytes, class: StorageClass) {
        let mut st = self.state.lock();
        let now = st.clock.now();
        st.buckets.entry(bucket.to_string()).or_default().insert(
            key.to_string(),
            StoredObject {
                bucket: bucket.into(),
                key: key.into(),
                bytes,
                class,
                created_at: now,
                accrued_until: now,
            },
        );
    }

    pub fn objects(&self) -> Vec<StoredObject> {
        self.state
            .lock()
            .buckets
            .values()
            .flat_map(|b| b.values().cloned())
            .collect()
    }

    // ---- queue ---------------------------------------------------------------

    pub fn send_message(
        &self,
        queue: &str,
        body: impl Into<Bytes>,
        at: SimTime,
    ) -> Result<SimTime, SimError> {
        let body: Bytes = body.into();
        let limit = self.config.payload_limit_bytes;
        if body.len() > limit {
            return Err(SimError::PayloadTooLarge {
                size: body.len(),
                limit,
            });
        }
        let mut st = self.state.lock();
        let visible_at = at + self.config.latency.queue_send.sample(&mut st.rng);
        st.next_message += 1;
        let message_id = st.next_message;
        st.queues
            .entry(queue.to_string())
            .or_default()
            .push_back(QueueMessage {
                queue: queue.into(),
                body,
                enqueue_time: at,
                visible_at,
                message_id,
            });
        st.ledger.record(
            at,
            CostCategory::QueueMsgs,
            1.0,
            Cents::per_million(1, self.config.prices.queue_per_million),
        );
        st.log(
            at,
            SimEventKind::Send {
                queue: queue.into(),
            },
        );
        Ok(visible_at)
    }

    /// Removes and returns up to `max_n` messages visible at `at`. Delivery is
    /// at-least-once; with a redelivery fraction configured a returned message
    /// may show up again later.
    pub fn receive_messages(&self, queue: &str, max_n: usize, at: SimTime) -> Vec<QueueMessage> {
        let redeliver = self.config.queue_redelivery_fraction;
        let mut st = self.state.lock();
        st.ledger.record(
            at,
            CostCategory::QueueMsgs,
            1.0,
            Cents::per_million(1, self.config.prices.queue_per_million),
        );
        let mut out = Vec::new();
        let mut again = Vec::new();
        if let Some(q) = st.queues.get_mut(queue) {
            let mut i = 0;
            while i < q.len() && out.len() < max_n {
                if q[i].visible_at <= at {
                    out.push(q.remove(i).expect("index in bounds"));
                } else {
                    i += 1;
                }
            }
        }
        if redeliver > 0.0 {
            for m in &out {
                if st.queue_rng.gen::<f64>() < redeliver {
                    let mut copy = m.clone();
                    copy.visible_at = at + 1_000_000;
                    again.push(copy);
                }
            }
            let q = st.queues.entry(queue.to_string()).or_default();
            q.extend(again);
        }
        let count = out.len();
        st.log(
            at,
            SimEventKind::Receive {
                queue: queue.into(),
                count,
            },
        );
        out
    }

    pub fn queue_depth(&self, queue: &str) -> usize {
        self.state.lock().queues.get(queue).map_or(0, |q| q.len())
    }

    // ---- key-value store -----------------------------------------------------

    pub fn kv_put(&self, key: &str, value: impl Into<Bytes>, at: SimTime) -> SimTime {
        let mut st = self.state.lock();
        let done = at + self.config.latency.kv_write.sample(&mut st.rng);
        st.kv.insert(key.to_string(), value.into());
        st.ledger.record(
            at,
            CostCategory::RequestsWrite,
            1.0,
            Cents::per_million(1, self.config.prices.kv_write_per_million),
        );
        st.log(at, SimEventKind::KvPut { key: key.into() });
        done
    }

    pub fn kv_get(&self, key: &str, at: SimTime) -> (Option<Bytes>, SimTime) {
        let mut st = self.state.lock();
        let done = at + self.config.latency.kv_read.sample(&mut st.rng);
        let value = st.kv.get(key).cloned();
        st.ledger.record(
            at,
            CostCategory::RequestsRead,
            1.0,
            Cents::per_million(1, self.config.prices.kv_read_per_million),
        );
        st.log(
            at,
            SimEventKind::KvGet {
                key: key.into(),
                hit: value.is_some(),
            },
        );
        (value, done)
    }

    pub fn kv_delete(&self, key: &str) -> bool {
        self.state.lock().kv.remove(key).is_some()
    }

    /// Unbilled scan, for tooling.
    pub fn kv_entries(&self, prefix: &str) -> Vec<(String, Bytes)> {
        self.state
            .lock()
            .kv
            .range(prefix.to_string()..)
            .take_while(|(k, _)| k.starts_with(prefix))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect()
    }

    pub fn kv_import(&self, key: &str, value: Bytes) {
        self.state.lock().kv.insert(key.to_string(), value);
    }

    // ---- accounting ----------------------------------------------------------

    pub fn ledger(&self) -> CostLedger {
        self.state.lock().ledger.clone()
    }

    pub fn ledger_len(&self) -> usize {
        self.state.lock().ledger.len()
    }

    pub fn ledger_since(&self, mark: usize) -> CostLedger {
        self.state.lock().ledger.since(mark)
    }

    pub fn events(&self) -> Vec<SimEvent> {
        self.state.lock().events.clone()
    }

    pub fn event_count(&self) -> usize {
        self.state.lock().events.len()
    }

    pub fn events_since(&self, mark: usize) -> Vec<SimEvent> {
        let st = self.state.lock();
        st.events[mark.min(st.events.len())..].to_vec()
    }
}

#[cfg(test)]
mod tests;
