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

//! Rule-based logical rewrites, plan fingerprinting, worker sizing, and the
//! physical pipeline planner.

pub mod cache_key;
pub mod fragment;
pub mod physical;
pub mod rules;
pub mod sizing;

pub use cache_key::{cache_key, canonical_plan, ResultCacheKey};
pub use fragment::{fragmentize, pack, Assignment, FragmentSpec, InputObject};
pub use physical::{
    plan_physical, stats_from_plan, AggMode, JoinStrategy, JoinStrategyChoice, PhysicalOp, PhysicalQueryPlan,
    PipelinePlan, PipelineSink, PipelineSource, PlannerConfig, TableStats,
};
pub use rules::{estimated_bytes, optimize_logical};
pub use sizing::{size_pipeline, SizingModel};
