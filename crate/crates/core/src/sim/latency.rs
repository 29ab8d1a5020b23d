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

//! Latency distributions for simulated infrastructure operations.
//!
//! Each distribution is described by four points (min, median, p99.9 tail,
//! max). Samples come from a log-normal fitted to (median, tail) and are
//! clamped to [min, max].

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::SimTime;

/// z-score of the 99.9th percentile of the standard normal distribution.
const Z_P999: f64 = 3.090_232_306_167_813;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyDist {
    pub min_ms: f64,
    pub median_ms: f64,
    pub tail_ms: f64,
    pub max_ms: f64,
}

impl LatencyDist {
    pub const fn new(min_ms: f64, median_ms: f64, tail_ms: f64, max_ms: f64) -> Self {
        Self {
            min_ms,
            median_ms,
            tail_ms,
            max_ms,
        }
    }

    /// Constant latency; handy in tests.
    pub const fn fixed(ms: f64) -> Self {
        Self::new(ms, ms, ms, ms)
    }

    pub fn validate(&self) -> Result<(), String> {
        let ok = self.min_ms >= 0.0
            && self.min_ms <= self.median_ms
            && self.median_ms <= self.tail_ms
            && self.tail_ms <= self.max_ms
            && self.median_ms > 0.0;
        if ok {
            Ok(())
        } else {
            Err(format!(
                "latency points must satisfy 0 <= min <= median <= tail <= max, median > 0: {self:?}"
            ))
        }
    }

    pub fn mu(&self) -> f64 {
        self.median_ms.ln()
    }

    pub fn sigma(&self) -> f64 {
        (self.tail_ms.ln() - self.median_ms.ln()).max(0.0) / Z_P999
    }

    pub fn sample_ms<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        let raw = (self.mu() + self.sigma() * z).exp();
        raw.clamp(self.min_ms, self.max_ms)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> SimTime {
        super::ms(self.sample_ms(rng))
    }
}

/// Latency configuration for every simulated service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyModel {
    pub lambda_cold_start: LatencyDist,
    pub lambda_warm_start: LatencyDist,
    /// Time an asynchronous invoke call occupies its caller.
    pub lambda_invoke_api: LatencyDist,
    pub standard_read: LatencyDist,
    pub standard_write: LatencyDist,
    pub hot_read: LatencyDist,
    pub hot_write: LatencyDist,
    pub queue_send: LatencyDist,
    pub kv_read: LatencyDist,
    pub kv_write: LatencyDist,
}

impl Default for LatencyModel {
    fn default() -> Self {
        Self {
            // Min/max from the measured cold start range; the median is fitted
            // so the clamped log-normal has a mean of about 185 ms.
            lambda_cold_start: LatencyDist::new(122.0, 177.0, 451.0, 451.0),
            lambda_warm_start: LatencyDist::new(5.0, 6.0, 9.0, 9.0),
            lambda_invoke_api: LatencyDist::new(3.0, 10.0, 60.0, 100.0),
            standard_read: LatencyDist::new(5.0, 27.0, 1000.0, 2000.0),
            standard_write: LatencyDist::new(8.0, 40.0, 500.0, 1000.0),
            hot_read: LatencyDist::new(1.0, 5.0, 120.0, 240.0),
            hot_write: LatencyDist::new(2.0, 8.0, 150.0, 300.0),
            queue_send: LatencyDist::new(2.0, 10.0, 80.0, 200.0),
            kv_read: LatencyDist::new(1.0, 4.0, 100.0, 200.0),
            kv_write: LatencyDist::new(1.0, 6.0, 250.0, 500.0),
        }
    }
}

impl LatencyModel {
    pub fn validate(&self) -> Result<(), String> {
        for d in [
            &self.lambda_cold_start,
            &self.lambda_warm_start,
            &self.lambda_invoke_api,
            &self.standard_read,
            &self.standard_write,
            &self.hot_read,
            &self.hot_write,
            &self.queue_send,
            &self.kv_read,
            &self.kv_write,
        ] {
            d.validate()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn median(mut v: Vec<f64>) -> f64 {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v[v.len() / 2]
    }

    #[test]
    fn samples_clamped_and_centered() {
        let d = LatencyDist::new(122.0, 177.0, 451.0, 451.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v: Vec<f64> = (0..20_000).map(|_| d.sample_ms(&mut rng)).collect();
        assert!(v.iter().all(|x| (122.0..=451.0).contains(x)));
        let m = median(v.clone());
        assert!((m - 177.0).abs() / 177.0 < 0.1, "median {m}");
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        assert!((mean - 185.0).abs() < 185.0 * 0.05, "mean {mean}");
    }

    #[test]
    fn fixed_distribution_is_constant() {
        let d = LatencyDist::fixed(7.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!((0..100).all(|_| d.sample_ms(&mut rng) == 7.0));
    }

    #[test]
    fn rejects_unordered_points() {
        assert!(LatencyDist::new(10.0, 5.0, 20.0, 30.0).validate().is_err());
        assert!(LatencyModel::default().validate().is_ok());
    }
}
