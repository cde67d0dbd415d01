use std::fmt;
use std::str::FromStr;

use rand_distr::{Distribution, Exp, LogNormal};
use serde::{Deserialize, Serialize};

use super::EngineError;
use crate::rng::{Purpose, StreamFactory};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DelayKind {
    Deterministic,
    Exponential,
    Lognormal,
}

impl DelayKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Deterministic => "deterministic",
            Self::Exponential => "exponential",
            Self::Lognormal => "lognormal",
        }
    }
}

impl fmt::Display for DelayKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DelayKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "deterministic" => Ok(Self::Deterministic),
            "exponential" => Ok(Self::Exponential),
            "lognormal" => Ok(Self::Lognormal),
            other => Err(format!(
                "unknown delay model `{other}` (expected deterministic | exponential | lognormal)"
            )),
        }
    }
}

/// Per-gradient compute time (network latency included).
///
/// The first `⌈slow_fraction · K⌉` workers are slow: their mean is multiplied by
/// `slow_factor`. The lognormal model keeps the mean fixed and uses `sigma` as
/// the shape of the underlying normal.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DelayModel {
    pub kind: DelayKind,
    pub mean_compute_time: f64,
    pub slow_fraction: f64,
    pub slow_factor: f64,
    pub sigma: f64,
}

impl Default for DelayModel {
    fn default() -> Self {
        Self {
            kind: DelayKind::Lognormal,
            mean_compute_time: 1.0,
            slow_fraction: 0.0,
            slow_factor: 1.0,
            sigma: 0.25,
        }
    }
}

impl DelayModel {
    pub fn deterministic(mean: f64) -> Self {
        Self {
            kind: DelayKind::Deterministic,
            mean_compute_time: mean,
            ..Self::default()
        }
    }

    /// `slow_fraction` of the workers run `slow_factor` times slower on average.
    pub fn with_stragglers(mut self, slow_fraction: f64, slow_factor: f64) -> Self {
        self.slow_fraction = slow_fraction;
        self.slow_factor = slow_factor;
        self
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: String| Err(EngineError::InvalidConfig(m));
        if !(self.mean_compute_time > 0.0 && self.mean_compute_time.is_finite()) {
            return bad(format!("mean_compute_time must be > 0, got {}", self.mean_compute_time));
        }
        if !(self.slow_factor >= 1.0 && self.slow_factor.is_finite()) {
            return bad(format!("slow_factor must be >= 1, got {}", self.slow_factor));
        }
        if !(0.0..1.0).contains(&self.slow_fraction) {
            return bad(format!("slow_fraction must lie in [0, 1), got {}", self.slow_fraction));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad(format!("delay sigma must be >= 0, got {}", self.sigma));
        }
        Ok(())
    }

    /// Number of slow workers among `workers`.
    pub fn slow_workers(&self, workers: usize) -> usize {
        // guards against 0.07 * 100 = 7.000000000000001 rounding up to 8
        let raw = self.slow_fraction * workers as f64 - 1e-9;
        (raw.ceil().max(0.0) as usize).min(workers)
    }

    pub fn is_heterogeneous(&self, workers: usize) -> bool {
        self.slow_factor > 1.0 && self.slow_workers(workers) > 0
    }

    pub fn mean_for(&self, worker: usize, workers: usize) -> f64 {
        if worker < self.slow_workers(workers) {
            self.mean_compute_time * self.slow_factor
        } else {
            self.mean_compute_time
        }
    }

    /// Compute time of `worker`'s `request`-th gradient.
    pub fn sample(&self, streams: &StreamFactory, worker: usize, request: u64, workers: usize) -> f64 {
        let mean = self.mean_for(worker, workers);
        let mut rng = streams.stream(Purpose::ComputeTime, worker as u64, request);
        match self.kind {
            DelayKind::Deterministic => mean,
            DelayKind::Exponential => Exp::new(1.0 / mean)
                .expect("positive rate")
                .sample(&mut rng),
            DelayKind::Lognormal => {
                let mu = mean.ln() - 0.5 * self.sigma * self.sigma;
                LogNormal::new(mu, self.sigma)
                    .expect("finite lognormal parameters")
                    .sample(&mut rng)
            }
        }
    }
}
