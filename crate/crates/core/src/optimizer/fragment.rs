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

//! Splitting a pipeline into per-worker fragments and the JSON request
//! format a worker receives.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::physical::{PhysicalOp, PipelinePlan, PipelineSink, PipelineSource};
use crate::storage::{ObjectRef, Schema, StrideSlice};

/// One input object, optionally restricted to a stride of its row groups.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputObject {
    pub object: ObjectRef,
    pub bytes: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub strides: Vec<StrideSlice>,
}

impl InputObject {
    pub fn whole(object: ObjectRef, bytes: u64) -> Self {
        Self {
            object,
            bytes,
            strides: vec![],
        }
    }

    /// Share of `bytes` this stride selects, for balancing and skew checks.
    pub fn effective_bytes(&self) -> u64 {
        let denom: u64 = self.strides.iter().map(|s| s.modulus.max(1) as u64).product();
        self.bytes / denom.max(1)
    }

    fn with_stride(&self, s: StrideSlice) -> Self {
        let mut o = self.clone();
        o.strides.push(s);
        o
    }
}

/// What a fragment reads.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Assignment {
    Scan { objects: Vec<InputObject> },
    /// Partition `partition` of the source exchange; `objects` are filled in
    /// by the coordinator once the producer completes.
    Exchange { partition: u32, objects: Vec<InputObject> },
    Values,
}

impl Assignment {
    pub fn objects(&self) -> &[InputObject] {
        match self {
            Assignment::Scan { objects } | Assignment::Exchange { objects, .. } => objects,
            Assignment::Values => &[],
        }
    }

    pub fn input_bytes(&self) -> u64 {
        self.objects().iter().map(InputObject::effective_bytes).sum()
    }

    /// Two assignments whose union reads exactly this one's rows, or `None`
    /// when there is nothing to split.
    pub fn split(&self) -> Option<(Assignment, Assignment)> {
        let objects = self.objects();
        let halves = match objects.len() {
            0 => return None,
            1 => {
                let o = &objects[0];
                (
                    vec![o.with_stride(StrideSlice { modulus: 2, residue: 0 })],
                    vec![o.with_stride(StrideSlice { modulus: 2, residue: 1 })],
                )
            }
            _ => {
                let sizes: Vec<u64> = objects.iter().map(InputObject::effective_bytes).collect();
                let mut bins = pack(&sizes, 2).into_iter().map(|b| b.into_iter().map(|i| objects[i].clone()).collect());
                (bins.next().unwrap(), bins.next().unwrap())
            }
        };
        Some(match self {
            Assignment::Scan { .. } => (Assignment::Scan { objects: halves.0 }, Assignment::Scan { objects: halves.1 }),
            Assignment::Exchange { partition, .. } => (
                Assignment::Exchange {
                    partition: *partition,
                    objects: halves.0,
                },
                Assignment::Exchange {
                    partition: *partition,
                    objects: halves.1,
                },
            ),
            Assignment::Values => unreachable!("values carry no objects"),
        })
    }
}

/// Greedy largest-first packing: each item, in descending size order, goes
/// to the least-loaded bin (lowest index on ties). Returns item indices per
/// bin, each bin in placement order.
pub fn pack(sizes: &[u64], bins: usize) -> Vec<Vec<usize>> {
    let bins = bins.max(1);
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| sizes[b].cmp(&sizes[a]).then(a.cmp(&b)));
    let mut load = vec![0u64; bins];
    let mut out = vec![Vec::new(); bins];
    for i in order {
        let (b, _) = load
            .iter()
            .enumerate()
            .min_by(|x, y| x.1.cmp(y.1).then(x.0.cmp(&y.0)))
            .expect("at least one bin");
        load[b] += sizes[i];
        out[b].push(i);
    }
    out
}

/// Input assignments for each of a pipeline's `fragment_count` workers.
/// Scan pipelines pack `objects` (the table manifest); with more workers
/// than objects, fragment f reads object f mod n under a row-group stride.
pub fn fragmentize(pipeline: &PipelinePlan, objects: &[InputObject]) -> Vec<Assignment> {
    let w = pipeline.fragment_count.max(1) as usize;
    match &pipeline.source {
        PipelineSource::Values { .. } => vec![Assignment::Values; w],
        PipelineSource::Exchange { .. } => (0..w as u32)
            .map(|partition| Assignment::Exchange {
                partition,
                objects: vec![],
            })
            .collect(),
        PipelineSource::Scan { .. } => {
            let n = objects.len();
            if n == 0 {
                return vec![Assignment::Scan { objects: vec![] }; w];
            }
            if w <= n {
                let sizes: Vec<u64> = objects.iter().map(|o| o.bytes).collect();
                return pack(&sizes, w)
                    .into_iter()
                    .map(|bin| Assignment::Scan {
                        objects: bin.into_iter().map(|i| objects[i].clone()).collect(),
                    })
                    .collect();
            }
            (0..w)
                .map(|f| {
                    let o = f % n;
                    // Fragments sharing object o: those f' < w with f' ≡ o (mod n).
                    let sharing = (w - o).div_ceil(n) as u32;
                    Assignment::Scan {
                        objects: vec![objects[o].with_stride(StrideSlice {
                            modulus: sharing,
                            residue: (f / n) as u32,
                        })],
                    }
                })
                .collect()
        }
    }
}

/// Where a worker writes and how its response is routed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FragmentSpec {
    pub query_id: String,
    pub pipeline: usize,
    /// Fragment index, with an `s<k>` suffix per skew split (e.g. "3s1").
    pub fragment: String,
    pub source: PipelineSource,
    pub input_schema: Schema,
    pub ops: Vec<PhysicalOp>,
    pub assignment: Assignment,
    /// Objects holding each join build side, keyed by build pipeline id.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub build_objects: BTreeMap<usize, Vec<InputObject>>,
    pub sink: PipelineSink,
    pub output_schema: Schema,
    pub output_bucket: String,
    pub response_queue: String,
    pub attempt: u32,
}

impl FragmentSpec {
    pub fn new(
        query_id: &str,
        pipeline: &PipelinePlan,
        fragment: String,
        assignment: Assignment,
        output_bucket: &str,
        response_queue: &str,
    ) -> Self {
        Self {
            query_id: query_id.to_string(),
            pipeline: pipeline.id,
            fragment,
            source: pipeline.source.clone(),
            input_schema: pipeline.input_schema.clone(),
            ops: pipeline.ops.clone(),
            assignment,
            build_objects: BTreeMap::new(),
            sink: pipeline.sink.clone(),
            output_schema: pipeline.output_schema.clone(),
            output_bucket: output_bucket.to_string(),
            response_queue: response_queue.to_string(),
            attempt: 0,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("fragment specs serialize")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    /// Number of output objects: one per exchange partition or one result.
    pub fn output_partitions(&self) -> u32 {
        match &self.sink {
            PipelineSink::Exchange { partition_count, .. } => *partition_count,
            PipelineSink::Result => 1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::physical::{plan_physical, PlannerConfig, TableStats};
    use crate::optimizer::optimize_logical;
    use crate::sql::{compile, tpch};
    use crate::storage::reader::stride_selects as stride_selects_all;
    use crate::storage::{Catalog, Manifest};

    fn objs(sizes: &[u64]) -> Vec<InputObject> {
        sizes
            .iter()
            .enumerate()
            .map(|(i, &b)| InputObject::whole(ObjectRef::new("data", format!("o{i}")), b))
            .collect()
    }

    fn q6_scan(w: u32) -> PipelinePlan {
        let mut c = Catalog::new();
        let ts = tpch::lineitem_schema();
        c.register(
            ts,
            Manifest {
                table: "lineitem".into(),
                version: "v".into(),
                objects: vec![],
            },
        );
        let cfg = PlannerConfig {
            force_fragments: Some(w),
            ..PlannerConfig::default()
        };
        let plan = plan_physical(&optimize_logical(compile(tpch::Q6, &c).unwrap()), &TableStats::new(), &cfg);
        plan.pipelines[0].clone()
    }

    fn sizes_of(a: &Assignment) -> Vec<u64> {
        a.objects().iter().map(|o| o.bytes).collect()
    }

    #[test]
    fn largest_first_packing_trace() {
        assert_eq!(pack(&[8, 7, 3, 2], 2), vec![vec![0, 3], vec![1, 2]]);
        let frags = fragmentize(&q6_scan(2), &objs(&[8, 7, 3, 2]));
        assert_eq!(sizes_of(&frags[0]), vec![8, 2]);
        assert_eq!(sizes_of(&frags[1]), vec![7, 3]);
    }

    #[test]
    fn equal_objects_spread_evenly() {
        let frags = fragmentize(&q6_scan(5), &objs(&[10; 10]));
        assert!(frags.iter().all(|f| f.objects().len() == 2));
        let one = fragmentize(&q6_scan(1), &objs(&[3, 1, 2]));
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].objects().len(), 3);
    }

    #[test]
    fn surplus_workers_stride_over_row_groups() {
        let frags = fragmentize(&q6_scan(7), &objs(&[5, 5, 5]));
        assert_eq!(frags.len(), 7);
        // Every row group of every object is read by exactly one fragment.
        for obj in 0..3 {
            for rg in 0..50 {
                let readers = frags
                    .iter()
                    .flat_map(|f| f.objects())
                    .filter(|o| o.object.key == format!("o{obj}") && stride_selects_all(&o.strides, rg))
                    .count();
                assert_eq!(readers, 1, "object {obj} group {rg}");
            }
        }
    }

    #[test]
    fn split_partitions_input() {
        let a = Assignment::Scan { objects: objs(&[4, 3, 1]) };
        let (x, y) = a.split().unwrap();
        assert_eq!(x.input_bytes() + y.input_bytes(), 8);
        let single = Assignment::Exchange {
            partition: 3,
            objects: objs(&[10]),
        };
        let (x, y) = single.split().unwrap();
        for rg in 0..20 {
            let n = [&x, &y]
                .iter()
                .filter(|a| stride_selects_all(&a.objects()[0].strides, rg))
                .count();
            assert_eq!(n, 1);
        }
        assert!(Assignment::Scan { objects: vec![] }.split().is_none());
    }

    #[test]
    fn spec_json_roundtrip() {
        let p = q6_scan(2);
        let frags = fragmentize(&p, &objs(&[8, 7]));
        let spec = FragmentSpec::new("q1", &p, "1".into(), frags[1].clone(), "tmp", "resp/q1");
        let text = spec.to_json();
        assert!(text.contains("\"pipeline\":0"));
        assert_eq!(FragmentSpec::from_json(&text).unwrap(), spec);
        assert!(FragmentSpec::from_json("{").is_err());
    }
}
