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

//! The worker runtime: decodes a fragment request, streams its input through
//! the operator chain, materializes one object per output partition and
//! reports to the query's response queue. Workers keep no state between
//! invocations.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::hash::partition_rows;
use super::ops::{build_operator, Chain, ExecError, FailureClass, OpContext, OpCounters};
use crate::optimizer::{Assignment, FragmentSpec, InputObject, PipelineSink, PipelineSource};
use crate::sim::{
    to_ms, FunctionSpec, InvocationCtx, InvocationId, InvocationOutcome, InvokeRequest, SimTime, Simulator,
    StorageClass,
};
use crate::storage::reader::{DEFAULT_MAX_REQUEST_BYTES, DEFAULT_TAIL_PROBE};
use crate::storage::types::DEFAULT_BATCH_ROWS;
use crate::storage::{
    fetch, output_key, plan_ranges, read_footer, ChunkDecoder, FetchOptions, HeldBytes, NicTimeline, OutputHandle,
    RecordBatch, RowGroupFilter, Schema, WriteOptions,
};

/// Deterministic CPU cost of a fragment, per vCPU.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComputeModel {
    pub ns_per_row: f64,
    pub ns_per_agg_update: f64,
    pub ns_per_decoded_byte: f64,
    pub ns_per_written_row: f64,
    /// Fixed cost of request decoding and operator setup.
    pub setup_us: u64,
}

impl Default for ComputeModel {
    fn default() -> Self {
        Self {
            ns_per_row: 10.0,
            ns_per_agg_update: 15.0,
            ns_per_decoded_byte: 0.5,
            ns_per_written_row: 20.0,
            setup_us: 2_000,
        }
    }
}

impl ComputeModel {
    pub fn micros(&self, c: OpCounters, decoded_bytes: u64, written_rows: u64, vcpus: f64) -> SimTime {
        let ns = c.rows_in as f64 * self.ns_per_row
            + c.agg_updates as f64 * self.ns_per_agg_update
            + decoded_bytes as f64 * self.ns_per_decoded_byte
            + written_rows as f64 * self.ns_per_written_row;
        self.setup_us + (ns / vcpus.max(0.01) / 1_000.0).ceil() as SimTime
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkerConfig {
    pub function: FunctionSpec,
    pub compute: ComputeModel,
    pub fetch: FetchOptions,
    pub batch_rows: usize,
    /// Share of function memory operators may hold.
    pub memory_fraction: f64,
    pub write: WriteOptions,
    pub put_attempts: u32,
    pub footer_probe_bytes: u64,
    pub max_request_bytes: u64,
}

impl WorkerConfig {
    pub fn new(function: FunctionSpec) -> Self {
        Self {
            function,
            compute: ComputeModel::default(),
            fetch: FetchOptions::default(),
            batch_rows: DEFAULT_BATCH_ROWS,
            memory_fraction: 0.6,
            write: WriteOptions::default(),
            put_attempts: 4,
            footer_probe_bytes: DEFAULT_TAIL_PROBE,
            max_request_bytes: DEFAULT_MAX_REQUEST_BYTES,
        }
    }

    pub fn memory_budget(&self) -> u64 {
        (self.function.memory_bytes() as f64 * self.memory_fraction) as u64
    }
}

/// Work for one fragment other than the root's own.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChildTask {
    pub fragment: String,
    pub assignment: Assignment,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub build_objects: BTreeMap<usize, Vec<InputObject>>,
    pub attempt: u32,
}

/// Invocation payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkerRequest {
    Fragment { spec: FragmentSpec },
    /// Invokes each child with the root's spec re-targeted, then runs `spec`.
    Root { spec: FragmentSpec, children: Vec<ChildTask> },
}

impl WorkerRequest {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("requests serialize")
    }
}

/// Label of one attempt in the invocation log and failure notices.
pub fn invocation_tag(query_id: &str, pipeline: usize, fragment: &str, attempt: u32) -> String {
    format!("{query_id}/p{pipeline}/f{fragment}/a{attempt}")
}

/// Inverse of [`invocation_tag`]: (query, pipeline, fragment, attempt).
pub fn parse_tag(tag: &str) -> Option<(String, usize, String, u32)> {
    let mut parts = tag.rsplitn(4, '/');
    let attempt = parts.next()?.strip_prefix('a')?.parse().ok()?;
    let fragment = parts.next()?.strip_prefix('f')?.to_string();
    let pipeline = parts.next()?.strip_prefix('p')?.parse().ok()?;
    Some((parts.next()?.to_string(), pipeline, fragment, attempt))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputObject {
    pub partition: u32,
    pub bucket: String,
    pub key: String,
    pub bytes: u64,
    pub rows: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct WorkerStats {
    pub rows_in: u64,
    pub rows_out: u64,
    pub bytes_read: u64,
    pub bytes_written: u64,
    pub wall_ms: f64,
    pub requests: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerFailure {
    pub class: FailureClass,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerResponse {
    pub query_id: String,
    pub pipeline: usize,
    pub fragment: String,
    pub attempt: u32,
    pub invocation: InvocationId,
    pub outputs: Vec<OutputObject>,
    pub stats: WorkerStats,
    pub error: Option<WorkerFailure>,
}

/// Entry point handed to the simulator for one invocation.
pub fn worker_entry(cfg: Arc<WorkerConfig>) -> crate::sim::Entrypoint {
    Box::new(move |sim: &Simulator, ctx: InvocationCtx| {
        let end = handle_invocation(sim, &cfg, &ctx);
        InvocationOutcome::Finished(end)
    })
}

fn handle_invocation(sim: &Simulator, cfg: &Arc<WorkerConfig>, ctx: &InvocationCtx) -> SimTime {
    let mut t = ctx.start_time;
    let request: WorkerRequest = match serde_json::from_slice(&ctx.payload) {
        Ok(r) => r,
        Err(e) => return reply_malformed(sim, ctx, &e.to_string()),
    };
    let spec = match request {
        WorkerRequest::Fragment { spec } => spec,
        WorkerRequest::Root { spec, children } => {
            for child in children {
                let mut c = spec.clone();
                c.fragment = child.fragment;
                c.assignment = child.assignment;
                c.build_objects = child.build_objects;
                c.attempt = child.attempt;
                let tag = invocation_tag(&c.query_id, c.pipeline, &c.fragment, c.attempt);
                let req = InvokeRequest::new(cfg.function.clone(), WorkerRequest::Fragment { spec: c.clone() }.to_json(), t)
                    .parent(Some(ctx.id))
                    .tag(tag)
                    .on_failure(c.response_queue.clone());
                match sim.invoke(req, worker_entry(cfg.clone())) {
                    Ok(r) => t = r.api_return,
                    // The coordinator sees the missing response and retriggers.
                    Err(_) => continue,
                }
            }
            spec
        }
    };
    let (outputs, stats, error, end) = match execute(sim, cfg, &spec, ctx, t) {
        Ok((outputs, stats, end)) => (outputs, stats, None, end),
        Err((e, at)) => (
            vec![],
            WorkerStats::default(),
            Some(WorkerFailure {
                class: e.class(),
                message: e.to_string(),
            }),
            at,
        ),
    };
    let response = WorkerResponse {
        query_id: spec.query_id.clone(),
        pipeline: spec.pipeline,
        fragment: spec.fragment.clone(),
        attempt: spec.attempt,
        invocation: ctx.id,
        outputs,
        stats: WorkerStats {
            wall_ms: to_ms(end.saturating_sub(ctx.start_time)),
            ..stats
        },
        error,
    };
    let body = serde_json::to_vec(&response).expect("responses serialize");
    // A failed send is indistinguishable from a lost worker; the coordinator
    // retriggers on timeout.
    let _ = sim.send_message(&spec.response_queue, body, end);
    end
}

/// Best-effort error reply for a request that does not decode.
fn reply_malformed(sim: &Simulator, ctx: &InvocationCtx, message: &str) -> SimTime {
    let end = ctx.start_time + 1_000;
    let Ok(v) = serde_json::from_slice::<serde_json::Value>(&ctx.payload) else {
        return end;
    };
    let spec = ["fragment", "root"]
        .iter()
        .map(|k| &v[k]["spec"])
        .find(|s| s.is_object())
        .unwrap_or(&serde_json::Value::Null);
    let Some(queue) = spec["response_queue"].as_str() else {
        return end;
    };
    let response = WorkerResponse {
        query_id: spec["query_id"].as_str().unwrap_or_default().to_string(),
        pipeline: spec["pipeline"].as_u64().unwrap_or(0) as usize,
        fragment: spec["fragment"].as_str().unwrap_or_default().to_string(),
        attempt: spec["attempt"].as_u64().unwrap_or(0) as u32,
        invocation: ctx.id,
        outputs: vec![],
        stats: WorkerStats::default(),
        error: Some(WorkerFailure {
            class: FailureClass::CodeError,
            message: format!("malformed request: {message}"),
        }),
    };
    let _ = sim.send_message(queue, serde_json::to_vec(&response).expect("responses serialize"), end);
    end
}

/// Reads every object of `objects` with the given columns, pushing decoded
/// batches into `push`. Returns (io completion, decoded bytes, requests).
#[allow(clippy::too_many_arguments)]
fn read_objects(
    sim: &Simulator,
    cfg: &WorkerConfig,
    objects: &[InputObject],
    columns: &[String],
    filter: Option<&RowGroupFilter>,
    at: SimTime,
    nic: &mut NicTimeline,
    push: &mut dyn FnMut(RecordBatch) -> Result<(), ExecError>,
) -> Result<(SimTime, u64, u64), ExecError> {
    let mut done = at;
    let mut bytes = 0;
    let mut requests = 0;
    for o in objects {
        // Footer probes are issued together; range fetches share the NIC.
        let footer = read_footer(sim, &o.object, at, cfg.footer_probe_bytes, cfg.fetch.max_attempts)?;
        requests += footer.requests as u64;
        let plan = plan_ranges(&o.object, &footer.footer, columns, filter, &o.strides, cfg.max_request_bytes)?;
        let held = HeldBytes {
            bytes: &footer.probe,
            offset: footer.probe_offset,
        };
        let fetched = fetch(sim, &plan, Some(held), footer.completed_at, nic, &cfg.fetch)?;
        requests += fetched.stats.requests;
        bytes += plan.chunks.iter().map(|c| c.length).sum::<u64>();
        done = done.max(fetched.completed_at).max(footer.completed_at);
        for batch in ChunkDecoder::new(&plan, &footer.footer, &fetched.buffers, cfg.batch_rows) {
            push(batch?)?;
        }
    }
    Ok((done, bytes, requests))
}

type Executed = (Vec<OutputObject>, WorkerStats, SimTime);

fn execute(
    sim: &Simulator,
    cfg: &WorkerConfig,
    spec: &FragmentSpec,
    ctx: &InvocationCtx,
    start: SimTime,
) -> Result<Executed, (ExecError, SimTime)> {
    let fail_at = |e: ExecError| (e, ctx.slowed_end(start + cfg.compute.setup_us));
    let op_ctx = OpContext {
        memory_budget: cfg.memory_budget(),
        batch_rows: cfg.batch_rows,
    };
    let mut nic = NicTimeline::default();
    let mut stats = WorkerStats::default();
    let mut decoded = 0u64;
    let mut t = start;

    // Build sides load before the probe input streams.
    let mut builds: BTreeMap<usize, Vec<RecordBatch>> = BTreeMap::new();
    let mut io_done = t;
    for op in &spec.ops {
        if let crate::optimizer::PhysicalOp::HashJoin {
            build_pipeline,
            build_schema,
            ..
        } = op
        {
            let objects = spec.build_objects.get(build_pipeline).cloned().unwrap_or_default();
            let cols: Vec<String> = build_schema.fields.iter().map(|f| f.name.clone()).collect();
            let mut batches = vec![];
            let (done, bytes, reqs) = read_objects(sim, cfg, &objects, &cols, None, t, &mut nic, &mut |b| {
                batches.push(b);
                Ok(())
            })
            .map_err(fail_at)?;
            io_done = io_done.max(done);
            decoded += bytes;
            stats.requests += reqs;
            builds.insert(*build_pipeline, batches);
        }
    }
    t = io_done;

    let mut schema = spec.input_schema.clone();
    let mut ops = Vec::with_capacity(spec.ops.len());
    for op in &spec.ops {
        let build = match op {
            crate::optimizer::PhysicalOp::HashJoin { build_pipeline, .. } => builds.remove(build_pipeline),
            _ => None,
        };
        ops.push(build_operator(op, &schema, op_ctx, build).map_err(fail_at)?);
        schema = op.output_schema(&schema);
    }
    let mut chain = Chain::new(ops);

    let out_schema = Arc::new(spec.output_schema.clone());
    let (partitions, keys, class) = match &spec.sink {
        PipelineSink::Exchange {
            partition_count,
            keys,
            class,
        } => (*partition_count, keys.clone(), *class),
        PipelineSink::Result => (1, vec![], StorageClass::Standard),
    };
    let mut handles = (0..partitions)
        .map(|p| {
            OutputHandle::new(
                spec.output_bucket.clone(),
                output_key(&spec.query_id, spec.pipeline as u32, &spec.fragment, p),
                out_schema.clone(),
                class,
                cfg.write,
            )
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| fail_at(e.into()))?;
    let mut rows_out = 0u64;
    let mut sink = |batch: RecordBatch| -> Result<(), ExecError> {
        let batch = RecordBatch::with_rows(out_schema.clone(), batch.columns, batch.row_count)?;
        rows_out += batch.num_rows() as u64;
        if partitions == 1 {
            return Ok(handles[0].append(&batch)?);
        }
        let key_cols = keys
            .iter()
            .map(|e| super::eval::evaluate(e, &batch))
            .collect::<Result<Vec<_>, _>>()?;
        let parts = partition_rows(&key_cols, batch.num_rows(), partitions);
        let mut idx: Vec<Vec<usize>> = vec![vec![]; partitions as usize];
        for (i, p) in parts.into_iter().enumerate() {
            idx[p as usize].push(i);
        }
        for (p, rows) in idx.iter().enumerate() {
            if !rows.is_empty() {
                handles[p].append(&batch.take(rows))?;
            }
        }
        Ok(())
    };

    let source_rows_before = chain.counters().rows_in;
    let _ = source_rows_before;
    let mut rows_in = 0u64;
    let mut push = |b: RecordBatch| -> Result<(), ExecError> {
        rows_in += b.num_rows() as u64;
        chain.push(b, &mut sink)
    };
    let (done, bytes, reqs) = match (&spec.source, &spec.assignment) {
        (PipelineSource::Scan { columns, predicates, .. }, Assignment::Scan { objects }) => {
            let filter = RowGroupFilter {
                conjuncts: predicates.clone(),
            };
            read_objects(sim, cfg, objects, columns, Some(&filter), t, &mut nic, &mut push)
        }
        (PipelineSource::Exchange { .. }, Assignment::Exchange { objects, .. }) => {
            let cols: Vec<String> = spec.input_schema.fields.iter().map(|f| f.name.clone()).collect();
            read_objects(sim, cfg, objects, &cols, None, t, &mut nic, &mut push)
        }
        (PipelineSource::Values { rows }, Assignment::Values) => {
            let schema = Arc::new(spec.input_schema.clone());
            let batch = if schema.is_empty() {
                RecordBatch::with_rows(schema, vec![], rows.len())
            } else {
                RecordBatch::from_rows(schema, rows)
            };
            batch.map_err(ExecError::from).and_then(&mut push).map(|_| (t, 0, 0))
        }
        _ => Err(ExecError::Malformed("source and assignment disagree".into())),
    }
    .map_err(fail_at)?;
    chain.finish(&mut sink).map_err(fail_at)?;
    drop(sink);
    decoded += bytes;
    stats.requests += reqs;
    stats.rows_in = rows_in;
    stats.rows_out = rows_out;
    stats.bytes_read = decoded;

    // Compute overlaps streaming input; it ends no earlier than the last byte.
    let cpu = cfg
        .compute
        .micros(chain.counters(), decoded, rows_out, cfg.function.vcpus());
    let compute_end = done.max(start + cpu);
    let put_at = ctx.slowed_end(compute_end);
    let mut outputs = Vec::with_capacity(handles.len());
    let mut end = put_at;
    for (p, h) in handles.into_iter().enumerate() {
        let r = h
            .finalize(sim, put_at, cfg.put_attempts)
            .map_err(|e| (ExecError::Storage(e.to_string()), put_at))?;
        stats.bytes_written += r.bytes;
        stats.requests += r.requests as u64;
        end = end.max(r.completed_at);
        outputs.push(OutputObject {
            partition: p as u32,
            bucket: r.bucket,
            key: r.key,
            bytes: r.bytes,
            rows: r.rows,
        });
    }
    Ok((outputs, stats, end))
}

/// Loads a whole input split back as batches; used by result readers.
pub fn read_result_objects(sim: &Simulator, objects: &[(String, String)]) -> Result<(Schema, Vec<RecordBatch>), ExecError> {
    let mut schema = None;
    let mut out = vec![];
    for (bucket, key) in objects {
        let obj = sim
            .peek_object(bucket, key)
            .ok_or_else(|| ExecError::Storage(format!("missing result object {bucket}/{key}")))?;
        let (footer, batches) = crate::storage::read_file(&obj.bytes)?;
        schema.get_or_insert(footer.schema);
        out.extend(batches);
    }
    Ok((schema.unwrap_or_default(), out))
}
