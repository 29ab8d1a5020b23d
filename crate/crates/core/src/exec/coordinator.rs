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

//! The per-query coordinator: compiles a request, consults the registry,
//! schedules ready pipelines stage by stage, tracks worker progress and
//! retriggers, splits or aborts fragments per the retry policy.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ops::FailureClass;
use super::registry::{self, pipeline_digest, RegistryEntry};
use super::worker::{
    invocation_tag, parse_tag, worker_entry, ChildTask, OutputObject, WorkerConfig, WorkerRequest, WorkerResponse,
};
use crate::optimizer::{
    cache_key, fragmentize, optimize_logical, plan_physical, stats_from_plan, Assignment, FragmentSpec, InputObject,
    JoinStrategy, PhysicalOp, PhysicalQueryPlan, PipelinePlan, PipelineSource, PlannerConfig, ResultCacheKey,
};
use crate::sim::{ms, to_ms, CostCategory, FailureNotice, FunctionSpec, InvocationId, InvokeRequest, SimError, SimTime, Simulator};
use crate::sql::{compile, QueryRequest, SqlError};
use crate::storage::{read_file, Catalog, ObjectRef, RecordBatch, Schema};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    /// Overdue when running longer than this times the stage median.
    pub straggler_factor: f64,
    pub straggler_floor_ms: f64,
    /// Used while no fragment of the stage has finished yet.
    pub no_median_timeout_ms: f64,
    pub max_attempts: u32,
    /// Overdue fragments reading more than this times the stage median
    /// input are split rather than retriggered.
    pub skew_ratio: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            straggler_factor: 2.0,
            straggler_floor_ms: 500.0,
            no_median_timeout_ms: 120_000.0,
            max_attempts: 3,
            skew_ratio: 4.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InvocationMode {
    /// Two-level above the threshold, direct otherwise.
    #[default]
    Auto,
    Direct,
    TwoLevel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub worker: WorkerConfig,
    pub planner: PlannerConfig,
    pub retry: RetryPolicy,
    pub invocation: InvocationMode,
    pub two_level_threshold: u32,
    pub poll_interval_ms: f64,
    pub scratch_bucket: String,
    /// Consult the registry before scheduling. Completed pipelines are
    /// registered regardless, so checkpoints stay available for resume.
    pub use_cache: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            worker: WorkerConfig::new(FunctionSpec::new("skylite-worker", 2048).expect("valid memory size")),
            planner: PlannerConfig::default(),
            retry: RetryPolicy::default(),
            invocation: InvocationMode::Auto,
            two_level_threshold: 64,
            poll_interval_ms: 100.0,
            scratch_bucket: "skylite-scratch".into(),
            use_cache: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOptions {
    /// Abort once this many pipelines have completed (checkpoint testing).
    pub abort_after_pipelines: Option<usize>,
}

#[derive(Debug, Error)]
pub enum QueryError {
    #[error(transparent)]
    Compile(#[from] SqlError),
    #[error("query {qid} aborted: {reason}")]
    Aborted { qid: String, reason: String },
    #[error("simulation: {0}")]
    Sim(#[from] SimError),
    #[error("result unreadable: {0}")]
    Result(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineStatus {
    Blocked,
    Ready,
    Running,
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub pipeline: usize,
    pub fragments: u32,
    pub cache_hit: bool,
    /// Not needed because a consumer was served from the registry.
    pub skipped: bool,
    pub two_level: bool,
    pub invocations: u32,
    pub retriggers: u32,
    pub splits: u32,
    pub started_ms: f64,
    pub finished_ms: f64,
    pub rows_out: u64,
    pub bytes_read: u64,
    pub bytes_written: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub qid: String,
    pub cache_key: ResultCacheKey,
    pub started_at: SimTime,
    pub finished_at: SimTime,
    pub latency_ms: f64,
    /// Cents per cost category over the query's interval.
    pub cost_cents: BTreeMap<String, f64>,
    pub total_cents: f64,
    pub invocations: u32,
    pub bytes_scanned: u64,
    pub stages: Vec<StageReport>,
    /// Result objects in fragment order.
    pub result: Vec<OutputObject>,
    pub schema: Schema,
}

impl RunReport {
    pub fn compute_cents(&self) -> f64 {
        self.cost_cents.get(CostCategory::ComputeGibS.name()).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum AttemptState {
    /// Issued by a root that has not been observed to crash.
    Running,
    Failed,
    Done,
}

#[derive(Debug, Clone)]
struct Attempt {
    invocation: Option<InvocationId>,
    submitted: SimTime,
    state: AttemptState,
    /// Members a root attempt was asked to invoke.
    slice: Vec<String>,
}

#[derive(Debug, Clone)]
struct FragmentRun {
    assignment: Assignment,
    attempts: Vec<Attempt>,
    /// Waiting for (re)submission, e.g. after an admission rejection.
    pending: bool,
    response: Option<(WorkerResponse, SimTime)>,
}

impl FragmentRun {
    fn running(&self) -> bool {
        self.attempts.iter().any(|a| a.state == AttemptState::Running)
    }
}

/// "3s1" sorts as [3, 1]: splits stay adjacent to their origin.
fn fragment_order(id: &str) -> Vec<u32> {
    id.split('s').map(|p| p.parse().unwrap_or(u32::MAX)).collect()
}

#[derive(Debug, Clone)]
struct PipelineRun {
    status: PipelineStatus,
    needed: bool,
    cache_hit: bool,
    two_level: bool,
    fragments: BTreeMap<Vec<u32>, (String, FragmentRun)>,
    outputs: Vec<OutputObject>,
    started: SimTime,
    finished: SimTime,
    retriggers: u32,
    splits: u32,
}

struct QueryRun<'a> {
    engine: &'a Engine<'a>,
    qid: String,
    queue: String,
    key: ResultCacheKey,
    plan: PhysicalQueryPlan,
    pipelines: Vec<PipelineRun>,
    /// Coordinator's own time cursor.
    t: SimTime,
    completed: usize,
    options: RunOptions,
    abort: Option<String>,
    bytes_scanned: u64,
}

/// Query engine bound to one simulator and catalog.
pub struct Engine<'a> {
    pub sim: &'a Simulator,
    pub catalog: Catalog,
    pub config: EngineConfig,
    worker: Arc<WorkerConfig>,
}

impl<'a> Engine<'a> {
    pub fn new(sim: &'a Simulator, catalog: Catalog, config: EngineConfig) -> Self {
        let worker = Arc::new(config.worker.clone());
        Self {
            sim,
            catalog,
            config,
            worker,
        }
    }

    /// Compiles and plans `sql` without executing it.
    pub fn plan(&self, sql: &str) -> Result<(ResultCacheKey, PhysicalQueryPlan), QueryError> {
        let logical = optimize_logical(compile(sql, &self.catalog)?);
        let key = cache_key(&logical);
        let plan = plan_physical(&logical, &stats_from_plan(&logical), &self.config.planner);
        debug_assert_eq!(plan.validate(), Ok(()));
        Ok((key, plan))
    }

    /// Runs a `{"query": ...}` request envelope.
    pub fn run_request(&self, envelope: &str) -> Result<RunReport, QueryError> {
        let req = QueryRequest::from_json(envelope)?;
        self.run_query(&req.query)
    }

    pub fn run_query(&self, sql: &str) -> Result<RunReport, QueryError> {
        self.run_query_with(sql, &RunOptions::default())
    }

    pub fn run_query_with(&self, sql: &str, options: &RunOptions) -> Result<RunReport, QueryError> {
        self.execute(sql, options, self.config.use_cache)
    }

    /// Re-plans `sql`, treats every registered pipeline as complete and runs
    /// the remainder.
    pub fn resume_query(&self, sql: &str) -> Result<RunReport, QueryError> {
        self.execute(sql, &RunOptions::default(), true)
    }

    fn execute(&self, sql: &str, options: &RunOptions, consult: bool) -> Result<RunReport, QueryError> {
        let (key, plan) = self.plan(sql)?;
        let qid = self.sim.next_name("q");
        let start = self.sim.now();
        let ledger_mark = self.sim.ledger_len();
        let mut run = QueryRun {
            engine: self,
            queue: format!("responses/{qid}"),
            qid,
            key,
            pipelines: plan
                .pipelines
                .iter()
                .map(|_| PipelineRun {
                    status: PipelineStatus::Blocked,
                    needed: !consult,
                    cache_hit: false,
                    two_level: false,
                    fragments: BTreeMap::new(),
                    outputs: vec![],
                    started: start,
                    finished: start,
                    retriggers: 0,
                    splits: 0,
                })
                .collect(),
            plan,
            t: start,
            completed: 0,
            options: options.clone(),
            abort: None,
            bytes_scanned: 0,
        };
        if consult {
            run.consult_registry();
        }
        let finished = run.drive();
        // Let duplicate attempts drain so the ledger covers all their work.
        run.wait_for_stragglers()?;
        if let Some(reason) = run.abort.clone() {
            return Err(QueryError::Aborted { qid: run.qid, reason });
        }
        let finished = finished?;
        Ok(run.report(start, finished, ledger_mark))
    }
}

/// Advances the shared timeline to at least `at`.
fn advance_to(sim: &Simulator, at: SimTime) -> Result<(), SimError> {
    let flag = Arc::new(AtomicBool::new(false));
    let f = flag.clone();
    sim.schedule(at, Box::new(move |_| f.store(true, Ordering::SeqCst)));
    sim.run_until(|| flag.load(Ordering::SeqCst))
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 })
}

/// Contiguous balanced slices: r = ceil(sqrt(w)) slices, the first
/// `w mod r` one element longer.
pub fn two_level_slices(w: usize) -> Vec<std::ops::Range<usize>> {
    if w == 0 {
        return vec![];
    }
    let r = (w as f64).sqrt().ceil() as usize;
    // Guard the float estimate in both directions.
    let r = if (r - 1) * (r - 1) >= w { r - 1 } else { r };
    let r = if r * r < w { r + 1 } else { r };
    let (base, extra) = (w / r, w % r);
    let mut out = Vec::with_capacity(r);
    let mut start = 0;
    for i in 0..r {
        let len = base + usize::from(i < extra);
        out.push(start..start + len);
        start += len;
    }
    out
}

impl QueryRun<'_> {
    fn sim(&self) -> &Simulator {
        self.engine.sim
    }

    /// Walks back from the sink: a registered pipeline is complete and its
    /// inputs are not needed; anything else is needed along with its inputs.
    fn consult_registry(&mut self) {
        let mut stack = vec![self.plan.sink().id];
        let mut seen = BTreeSet::new();
        while let Some(id) = stack.pop() {
            if !seen.insert(id) {
                continue;
            }
            let p = &self.plan.pipelines[id];
            let (entry, done) = registry::lookup(self.sim(), &self.key.for_pipeline(id), p, self.t);
            self.t = done;
            match entry {
                Some(e) if e.partition_count == p.sink_partitions() => {
                    let run = &mut self.pipelines[id];
                    run.needed = true;
                    run.cache_hit = true;
                    run.status = PipelineStatus::Complete;
                    run.outputs = e.outputs;
                    run.started = self.t;
                    run.finished = self.t;
                }
                _ => {
                    self.pipelines[id].needed = true;
                    stack.extend(p.depends_on.iter().copied());
                }
            }
        }
        for run in &mut self.pipelines {
            if !run.needed {
                run.status = PipelineStatus::Complete;
            }
        }
    }

    fn drive(&mut self) -> Result<SimTime, QueryError> {
        let sink = self.plan.sink().id;
        let poll = ms(self.engine.config.poll_interval_ms);
        let mut next_poll = self.t;
        loop {
            if self.abort.is_none() {
                self.schedule_ready();
            }
            if let Some(reason) = &self.abort {
                return Err(QueryError::Aborted {
                    qid: self.qid.clone(),
                    reason: reason.clone(),
                });
            }
            if self.pipelines[sink].status == PipelineStatus::Complete {
                return Ok(self.pipelines[sink].finished.max(self.t));
            }
            next_poll = (next_poll + poll).max(self.t);
            advance_to(self.sim(), next_poll)?;
            self.t = self.t.max(next_poll);
            self.poll();
            self.track_progress();
        }
    }

    fn schedule_ready(&mut self) {
        for id in 0..self.pipelines.len() {
            if self.abort.is_some() {
                return;
            }
            let run = &self.pipelines[id];
            if run.status != PipelineStatus::Blocked {
                if run.status == PipelineStatus::Running {
                    self.submit_pending(id);
                }
                continue;
            }
            let deps_done = self.plan.pipelines[id]
                .depends_on
                .iter()
                .all(|d| self.pipelines[*d].status == PipelineStatus::Complete);
            if !deps_done {
                continue;
            }
            self.pipelines[id].status = PipelineStatus::Ready;
            self.start_stage(id);
        }
    }

    fn scan_objects(&self, table: &str) -> Vec<InputObject> {
        match self.engine.catalog.resolve(table) {
            Ok((_, manifest)) => manifest
                .objects
                .iter()
                .map(|o| InputObject::whole(ObjectRef::new(&o.bucket, &o.key), o.file_bytes))
                .collect(),
            Err(_) => vec![],
        }
    }

    /// Non-empty outputs of `pipeline` for `partition` (all when None).
    fn exchange_objects(&self, pipeline: usize, partition: Option<u32>) -> Vec<InputObject> {
        self.pipelines[pipeline]
            .outputs
            .iter()
            .filter(|o| partition.map_or(true, |p| o.partition == p) && o.rows > 0)
            .map(|o| InputObject::whole(ObjectRef::new(&o.bucket, &o.key), o.bytes))
            .collect()
    }

    fn start_stage(&mut self, id: usize) {
        let p = self.plan.pipelines[id].clone();
        let base = match &p.source {
            PipelineSource::Scan { table, .. } => fragmentize(&p, &self.scan_objects(table)),
            _ => fragmentize(&p, &[]),
        };
        let mut fragments = BTreeMap::new();
        for (i, a) in base.into_iter().enumerate() {
            let a = match (&p.source, a) {
                (PipelineSource::Exchange { pipeline }, Assignment::Exchange { partition, .. }) => Assignment::Exchange {
                    partition,
                    objects: self.exchange_objects(*pipeline, Some(partition)),
                },
                (_, a) => a,
            };
            let fid = i.to_string();
            fragments.insert(
                fragment_order(&fid),
                (
                    fid,
                    FragmentRun {
                        assignment: a,
                        attempts: vec![],
                        pending: false,
                        response: None,
                    },
                ),
            );
        }
        let w = fragments.len();
        let cfg = &self.engine.config;
        let two_level = match cfg.invocation {
            InvocationMode::Direct => false,
            InvocationMode::TwoLevel => w > 1,
            InvocationMode::Auto => w as u32 > cfg.two_level_threshold,
        };
        let run = &mut self.pipelines[id];
        run.status = PipelineStatus::Running;
        run.started = self.t;
        run.fragments = fragments;
        run.two_level = two_level;
        if two_level {
            let ids: Vec<String> = run.fragments.values().map(|(f, _)| f.clone()).collect();
            for slice in two_level_slices(w) {
                self.invoke_root(id, &ids[slice]);
                if self.abort.is_some() {
                    return;
                }
            }
        } else {
            let ids: Vec<String> = run.fragments.values().map(|(f, _)| f.clone()).collect();
            for f in ids {
                self.invoke_direct(id, &f);
                if self.abort.is_some() {
                    return;
                }
            }
        }
    }

    fn spec_for(&self, pipeline: usize, fragment: &str, attempt: u32) -> FragmentSpec {
        let p = &self.plan.pipelines[pipeline];
        let (_, f) = &self.pipelines[pipeline].fragments[&fragment_order(fragment)];
        let mut spec = FragmentSpec::new(
            &self.qid,
            p,
            fragment.to_string(),
            f.assignment.clone(),
            &self.engine.config.scratch_bucket,
            &self.queue,
        );
        spec.attempt = attempt;
        spec.build_objects = self.build_objects(p, &f.assignment);
        spec
    }

    fn build_objects(&self, p: &PipelinePlan, a: &Assignment) -> BTreeMap<usize, Vec<InputObject>> {
        let partition = match a {
            Assignment::Exchange { partition, .. } => Some(*partition),
            _ => None,
        };
        p.ops
            .iter()
            .filter_map(|op| match op {
                PhysicalOp::HashJoin {
                    strategy,
                    build_pipeline,
                    ..
                } => {
                    let part = match strategy {
                        JoinStrategy::Broadcast => None,
                        JoinStrategy::Repartition => partition,
                    };
                    Some((*build_pipeline, self.exchange_objects(*build_pipeline, part)))
                }
                _ => None,
            })
            .collect()
    }

    fn fragment_mut(&mut self, pipeline: usize, fragment: &str) -> Option<&mut FragmentRun> {
        self.pipelines[pipeline]
            .fragments
            .get_mut(&fragment_order(fragment))
            .filter(|(f, _)| f == fragment)
            .map(|(_, r)| r)
    }

    fn next_attempt(&self, pipeline: usize, fragment: &str) -> u32 {
        self.pipelines[pipeline].fragments[&fragment_order(fragment)].1.attempts.len() as u32
    }

    fn invoke(&mut self, req: InvokeRequest, on_error: &[(usize, String)]) -> Option<InvocationId> {
        let entry = worker_entry(self.engine.worker.clone());
        match self.sim().invoke(req, entry) {
            Ok(r) => {
                self.t = r.api_return;
                Some(r.id)
            }
            Err(SimError::QuotaExceeded { .. }) => {
                for (p, f) in on_error {
                    if let Some(fr) = self.fragment_mut(*p, f) {
                        fr.pending = true;
                    }
                }
                None
            }
            Err(e) => {
                self.abort = Some(format!("invocation rejected: {e}"));
                None
            }
        }
    }

    fn invoke_direct(&mut self, pipeline: usize, fragment: &str) {
        let attempt = self.next_attempt(pipeline, fragment);
        let spec = self.spec_for(pipeline, fragment, attempt);
        let req = InvokeRequest::new(
            self.engine.worker.function.clone(),
            WorkerRequest::Fragment { spec }.to_json(),
            self.t,
        )
        .tag(invocation_tag(&self.qid, pipeline, fragment, attempt))
        .on_failure(self.queue.clone());
        let submitted = self.t;
        if let Some(id) = self.invoke(req, &[(pipeline, fragment.to_string())]) {
            let fr = self.fragment_mut(pipeline, fragment).expect("fragment exists");
            fr.pending = false;
            fr.attempts.push(Attempt {
                invocation: Some(id),
                submitted,
                state: AttemptState::Running,
                slice: vec![],
            });
        }
    }

    fn invoke_root(&mut self, pipeline: usize, slice: &[String]) {
        let root = &slice[0];
        let attempt = self.next_attempt(pipeline, root);
        let spec = self.spec_for(pipeline, root, attempt);
        let children: Vec<ChildTask> = slice[1..]
            .iter()
            .map(|f| {
                let child = self.spec_for(pipeline, f, self.next_attempt(pipeline, f));
                ChildTask {
                    fragment: child.fragment,
                    assignment: child.assignment,
                    build_objects: child.build_objects,
                    attempt: child.attempt,
                }
            })
            .collect();
        let req = InvokeRequest::new(
            self.engine.worker.function.clone(),
            WorkerRequest::Root { spec, children }.to_json(),
            self.t,
        )
        .tag(invocation_tag(&self.qid, pipeline, root, attempt))
        .on_failure(self.queue.clone());
        let submitted = self.t;
        let all: Vec<(usize, String)> = slice.iter().map(|f| (pipeline, f.clone())).collect();
        if let Some(id) = self.invoke(req, &all) {
            for (i, f) in slice.iter().enumerate() {
                let fr = self.fragment_mut(pipeline, f).expect("fragment exists");
                fr.pending = false;
                fr.attempts.push(Attempt {
                    invocation: (i == 0).then_some(id),
                    submitted,
                    state: AttemptState::Running,
                    slice: if i == 0 { slice[1..].to_vec() } else { vec![] },
                });
            }
        }
    }

    fn submit_pending(&mut self, pipeline: usize) {
        let pending: Vec<String> = self.pipelines[pipeline]
            .fragments
            .values()
            .filter(|(_, f)| f.pending && f.response.is_none())
            .map(|(id, _)| id.clone())
            .collect();
        for f in pending {
            self.invoke_direct(pipeline, &f);
            if self.abort.is_some() {
                return;
            }
        }
    }

    fn poll(&mut self) {
        loop {
            let msgs = self.sim().receive_messages(&self.queue, 10, self.t);
            if msgs.is_empty() {
                return;
            }
            for m in msgs {
                if let Ok(r) = serde_json::from_slice::<WorkerResponse>(&m.body) {
                    self.on_response(r);
                } else if let Ok(n) = serde_json::from_slice::<FailureNotice>(&m.body) {
                    self.on_crash(n);
                }
            }
        }
    }

    fn on_response(&mut self, r: WorkerResponse) {
        let max = self.engine.config.retry.max_attempts;
        let t = self.t;
        let p = r.pipeline;
        if r.query_id != self.qid || p >= self.pipelines.len() || self.pipelines[p].status != PipelineStatus::Running {
            return;
        }
        let Some(fr) = self.fragment_mut(p, &r.fragment) else {
            return;
        };
        if fr.response.is_some() {
            return;
        }
        if let Some(a) = fr.attempts.get_mut(r.attempt as usize) {
            a.state = if r.error.is_some() { AttemptState::Failed } else { AttemptState::Done };
        }
        let fragment = r.fragment.clone();
        match &r.error {
            None => {
                let bytes = r.stats.bytes_read;
                fr.response = Some((r, t));
                self.bytes_scanned += bytes;
                self.maybe_complete(p);
            }
            Some(err) => match err.class {
                FailureClass::CodeError => {
                    self.abort = Some(format!("code_error in p{p}/f{fragment}: {}", err.message));
                }
                FailureClass::DataSkew => {
                    if !self.split(p, &fragment) {
                        self.abort = Some(format!("data_skew in p{p}/f{fragment}: {}", err.message));
                    }
                }
                FailureClass::Transient => {
                    let (running, used) = (fr.running(), fr.attempts.len() as u32);
                    if !running {
                        if used >= max {
                            self.abort = Some(format!("transient-exhausted in p{p}/f{fragment}: {}", err.message));
                        } else {
                            self.invoke_direct(p, &fragment);
                        }
                    }
                }
            },
        }
    }

    fn on_crash(&mut self, n: FailureNotice) {
        let Some((qid, p, fragment, attempt)) = parse_tag(&n.tag) else {
            return;
        };
        if qid != self.qid || p >= self.pipelines.len() || self.pipelines[p].status != PipelineStatus::Running {
            return;
        }
        let Some(fr) = self.fragment_mut(p, &fragment) else {
            return;
        };
        let Some(a) = fr.attempts.get_mut(attempt as usize) else {
            return;
        };
        a.state = AttemptState::Failed;
        let slice = std::mem::take(&mut a.slice);
        // A crashed root never invoked its slice; reissue those directly.
        let mut retry = vec![fragment];
        for member in slice {
            if let Some(m) = self.fragment_mut(p, &member) {
                if let Some(last) = m.attempts.last_mut() {
                    if last.invocation.is_none() && last.state == AttemptState::Running {
                        last.state = AttemptState::Failed;
                    }
                }
                retry.push(member);
            }
        }
        let max = self.engine.config.retry.max_attempts;
        for f in retry {
            let fr = self.fragment_mut(p, &f).expect("fragment exists");
            if fr.response.is_some() || fr.running() {
                continue;
            }
            if fr.attempts.len() as u32 >= max {
                self.abort = Some(format!("transient-exhausted in p{p}/f{f}: function crashed"));
                return;
            }
            self.invoke_direct(p, &f);
        }
    }

    /// Retriggers or splits overdue fragments of running stages.
    fn track_progress(&mut self) {
        let policy = self.engine.config.retry;
        for p in 0..self.pipelines.len() {
            if self.abort.is_some() || self.pipelines[p].status != PipelineStatus::Running {
                continue;
            }
            let run = &self.pipelines[p];
            let done: Vec<f64> = run
                .fragments
                .values()
                .filter_map(|(_, f)| {
                    let (_, at) = f.response.as_ref()?;
                    let submitted = f.attempts.iter().map(|a| a.submitted).min()?;
                    Some(to_ms(at.saturating_sub(submitted)))
                })
                .collect();
            let threshold = match median(done) {
                Some(m) => (m * policy.straggler_factor).max(policy.straggler_floor_ms),
                None => policy.no_median_timeout_ms,
            };
            let input_median = median(
                run.fragments
                    .values()
                    .map(|(_, f)| f.assignment.input_bytes() as f64)
                    .collect(),
            )
            .unwrap_or(0.0);
            let splittable = self.plan.pipelines[p].splittable();
            let overdue: Vec<(String, bool)> = run
                .fragments
                .values()
                .filter(|(_, f)| f.response.is_none() && !f.pending && (f.attempts.len() as u32) < policy.max_attempts)
                .filter_map(|(id, f)| {
                    let last = f.attempts.iter().filter(|a| a.state == AttemptState::Running).map(|a| a.submitted).max()?;
                    (to_ms(self.t.saturating_sub(last)) > threshold).then(|| {
                        let skewed = splittable
                            && f.assignment.input_bytes() as f64 > policy.skew_ratio * input_median
                            && input_median > 0.0;
                        (id.clone(), skewed)
                    })
                })
                .collect();
            for (f, skewed) in overdue {
                if skewed && self.split(p, &f) {
                    continue;
                }
                self.pipelines[p].retriggers += 1;
                self.invoke_direct(p, &f);
            }
        }
    }

    /// Replaces `fragment` by two sub-fragments over halves of its input.
    fn split(&mut self, p: usize, fragment: &str) -> bool {
        if !self.plan.pipelines[p].splittable() {
            return false;
        }
        let key = fragment_order(fragment);
        let Some((_, fr)) = self.pipelines[p].fragments.get(&key) else {
            return false;
        };
        let Some((a, b)) = fr.assignment.split() else {
            return false;
        };
        self.pipelines[p].fragments.remove(&key);
        self.pipelines[p].splits += 1;
        let ids = [format!("{fragment}s0"), format!("{fragment}s1")];
        for (id, assignment) in ids.iter().zip([a, b]) {
            self.pipelines[p].fragments.insert(
                fragment_order(id),
                (
                    id.clone(),
                    FragmentRun {
                        assignment,
                        attempts: vec![],
                        pending: false,
                        response: None,
                    },
                ),
            );
        }
        for id in &ids {
            self.invoke_direct(p, id);
        }
        true
    }

    fn maybe_complete(&mut self, p: usize) {
        let run = &mut self.pipelines[p];
        if run.fragments.values().any(|(_, f)| f.response.is_none()) {
            return;
        }
        run.outputs = run
            .fragments
            .values()
            .flat_map(|(_, f)| f.response.as_ref().expect("all responded").0.outputs.clone())
            .collect();
        run.status = PipelineStatus::Complete;
        run.finished = self.t;
        let entry = RegistryEntry {
            cache_key: self.key.for_pipeline(p),
            pipeline: p,
            pipeline_digest: pipeline_digest(&self.plan.pipelines[p]),
            outputs: run.outputs.clone(),
            partition_count: self.plan.pipelines[p].sink_partitions(),
            created_at: self.t,
            creator_qid: self.qid.clone(),
        };
        registry::register(self.sim(), &entry, self.t);
        self.completed += 1;
        if let Some(n) = self.options.abort_after_pipelines {
            if self.completed >= n && p != self.plan.sink().id {
                self.abort = Some(format!("stopped after {n} pipeline(s)"));
            }
        }
    }

    fn own_invocations(&self) -> Vec<crate::sim::Invocation> {
        let prefix = format!("{}/", self.qid);
        self.sim()
            .invocations()
            .into_iter()
            .filter(|i| i.tag.starts_with(&prefix))
            .collect()
    }

    fn wait_for_stragglers(&mut self) -> Result<(), SimError> {
        let poll = ms(self.engine.config.poll_interval_ms);
        while self.own_invocations().iter().any(|i| i.end_time.is_none()) {
            self.t += poll;
            advance_to(self.sim(), self.t)?;
        }
        Ok(())
    }

    fn report(&self, start: SimTime, finished: SimTime, ledger_mark: usize) -> RunReport {
        let ledger = self.sim().ledger_since(ledger_mark);
        let mut cost_cents: BTreeMap<String, f64> = BTreeMap::new();
        let mut total = 0i128;
        for e in ledger.entries() {
            *cost_cents.entry(e.category.name().to_string()).or_default() += e.cost.as_cents();
            total += e.cost.picocents();
        }
        let stages = self
            .pipelines
            .iter()
            .enumerate()
            .map(|(id, r)| {
                let responses = r.fragments.values().filter_map(|(_, f)| f.response.as_ref());
                let (mut rows, mut read, mut written) = (0, 0, 0);
                for (resp, _) in responses {
                    rows += resp.stats.rows_out;
                    read += resp.stats.bytes_read;
                    written += resp.stats.bytes_written;
                }
                StageReport {
                    pipeline: id,
                    fragments: if r.fragments.is_empty() {
                        self.plan.pipelines[id].fragment_count
                    } else {
                        r.fragments.len() as u32
                    },
                    cache_hit: r.cache_hit,
                    skipped: !r.needed,
                    two_level: r.two_level,
                    invocations: 0,
                    retriggers: r.retriggers,
                    splits: r.splits,
                    started_ms: to_ms(r.started.saturating_sub(start)),
                    finished_ms: to_ms(r.finished.saturating_sub(start)),
                    rows_out: rows,
                    bytes_read: read,
                    bytes_written: written,
                }
            })
            .collect::<Vec<_>>();
        let invocations = self.own_invocations();
        let mut stages = stages;
        for inv in &invocations {
            if let Some((_, p, _, _)) = parse_tag(&inv.tag) {
                if let Some(s) = stages.get_mut(p) {
                    s.invocations += 1;
                }
            }
        }
        RunReport {
            qid: self.qid.clone(),
            cache_key: self.key,
            started_at: start,
            finished_at: finished,
            latency_ms: to_ms(finished.saturating_sub(start)),
            cost_cents,
            total_cents: crate::sim::Cents(total).as_cents(),
            invocations: invocations.len() as u32,
            bytes_scanned: self.bytes_scanned,
            stages,
            result: self.pipelines[self.plan.sink().id].outputs.clone(),
            schema: self.plan.output_schema().clone(),
        }
    }
}

/// Unbilled copy of a finished query's result, as the client would read it.
pub fn read_result(sim: &Simulator, report: &RunReport) -> Result<Vec<RecordBatch>, QueryError> {
    let mut out = vec![];
    for o in &report.result {
        let obj = sim
            .peek_object(&o.bucket, &o.key)
            .ok_or_else(|| QueryError::Result(format!("missing {}/{}", o.bucket, o.key)))?;
        let (_, batches) = read_file(&obj.bytes).map_err(|e| QueryError::Result(e.to_string()))?;
        out.extend(batches);
    }
    Ok(out)
}

/// Concatenated bytes of the result objects, for byte-level comparison.
pub fn result_bytes(sim: &Simulator, report: &RunReport) -> Result<Vec<u8>, QueryError> {
    let mut out = vec![];
    for o in &report.result {
        let obj = sim
            .peek_object(&o.bucket, &o.key)
            .ok_or_else(|| QueryError::Result(format!("missing {}/{}", o.bucket, o.key)))?;
        out.extend_from_slice(&obj.bytes);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slices_cover_and_balance() {
        for w in 1..=2_000usize {
            let s = two_level_slices(w);
            let r = (1..).find(|r: &usize| r * r >= w).unwrap();
            assert_eq!(s.len(), r, "w={w}");
            assert_eq!(s.first().unwrap().start, 0);
            assert_eq!(s.last().unwrap().end, w);
            assert!(s.windows(2).all(|p| p[0].end == p[1].start));
            let lens: Vec<usize> = s.iter().map(|r| r.len()).collect();
            assert!(lens.iter().max().unwrap() - lens.iter().min().unwrap() <= 1);
            assert!(lens.windows(2).all(|p| p[0] >= p[1]), "longer slices come first");
        }
        assert!(two_level_slices(0).is_empty());
    }

    #[test]
    fn sixty_five_fragments_use_nine_roots() {
        let lens: Vec<usize> = two_level_slices(65).iter().map(|r| r.len()).collect();
        assert_eq!(lens, vec![8, 8, 7, 7, 7, 7, 7, 7, 7]);
    }

    #[test]
    fn split_fragments_sort_next_to_their_origin() {
        let mut ids = vec!["10", "2s1", "2", "2s0", "3"];
        ids.sort_by_key(|f| fragment_order(f));
        assert_eq!(ids, vec!["2", "2s0", "2s1", "3", "10"]);
    }

    #[test]
    fn median_of_even_and_odd_counts() {
        assert_eq!(median(vec![]), None);
        assert_eq!(median(vec![3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(vec![4.0, 1.0, 3.0, 2.0]), Some(2.5));
    }
}
