//! Numerical checks of the ordered-momentum gap identities on live runs.
//!
//! [`LemmaVerifier`] is an engine observer: attach it to an ordered-momentum run
//! and call [`LemmaVerifier::finish`] for the report. Helpers for delay
//! statistics, assumption constants and the convergence trend live here too.

mod aux;
mod lemmas;

use std::collections::BTreeMap;

use serde::Serialize;

pub use aux::{advance_aux, AuxError, AuxState};
pub use lemmas::{
    BoundReport, DetailRow, LemmaReport, LemmaVerifier, IDENTITY_TOLERANCE, LEDGER_STRIDE,
    LEDGER_TOLERANCE,
};

use crate::engine::{Observer, TraceRecord};
use crate::optim::Optimizer;
use crate::problems::{AssumptionConstants, AssumptionTracker, GradientOracle};
use crate::vector;
use crate::Scalar;

/// Worst residual of one identity over a run.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct ResidualReport {
    pub name: String,
    pub max_abs: f64,
    /// `‖residual‖ / (1 + ‖lhs‖)`
    pub max_rel: f64,
    pub at_iteration: Option<u64>,
    pub checked: u64,
    pub skipped: u64,
    pub tolerance: f64,
    pub passed: bool,
}

impl ResidualReport {
    pub fn new(name: &str, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            max_abs: 0.0,
            max_rel: 0.0,
            at_iteration: None,
            checked: 0,
            skipped: 0,
            tolerance,
            passed: true,
        }
    }

    /// Records a vector residual and returns its relative size.
    pub fn record<S: Scalar>(&mut self, t: u64, residual: &[S], lhs: &[S]) -> f64 {
        let abs = vector::norm(residual).to_f64_lossy();
        let rel = vector::relative_residual(residual, lhs).to_f64_lossy();
        self.push(t, abs, rel);
        rel
    }

    /// Records a scalar discrepancy; absolute and relative are the same.
    pub fn record_scalar(&mut self, t: u64, diff: f64) {
        self.push(t, diff, diff);
    }

    fn push(&mut self, t: u64, abs: f64, rel: f64) {
        self.checked += 1;
        // NaN must not hide behind a comparison
        let rel = if rel.is_nan() { f64::INFINITY } else { rel };
        if self.at_iteration.is_none() || rel > self.max_rel {
            self.max_rel = rel;
            self.at_iteration = Some(t);
        }
        if abs.is_nan() {
            self.max_abs = f64::INFINITY;
        } else {
            self.max_abs = self.max_abs.max(abs);
        }
    }

    pub fn skip(&mut self) {
        self.skipped += 1;
    }

    pub fn finalize(&mut self) {
        self.passed = self.max_rel <= self.tolerance;
    }
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct DelayStats {
    pub mean: f64,
    pub max: u64,
    /// τ -> count
    pub histogram: BTreeMap<u64, u64>,
}

pub fn delay_stats(trace: &[TraceRecord]) -> DelayStats {
    let mut histogram = BTreeMap::new();
    let mut sum = 0.0;
    let mut max = 0;
    for r in trace {
        *histogram.entry(r.tau).or_insert(0) += 1;
        sum += r.tau as f64;
        max = max.max(r.tau);
    }
    let mean = if trace.is_empty() {
        0.0
    } else {
        sum / trace.len() as f64
    };
    DelayStats {
        mean,
        max,
        histogram,
    }
}

/// First-half versus second-half mean of a metric series.
#[derive(Clone, Copy, Debug, Serialize, PartialEq)]
pub struct Trend {
    pub first_half_mean: f64,
    pub second_half_mean: f64,
}

impl Trend {
    pub fn decreasing(&self) -> bool {
        self.second_half_mean < self.first_half_mean
    }
}

/// Splits `(t, value)` samples at `horizon / 2`. `None` when a half is empty.
pub fn convergence_trend(samples: &[(u64, f64)], horizon: u64) -> Option<Trend> {
    let mid = horizon / 2;
    let mean = |it: &mut dyn Iterator<Item = f64>| {
        let (s, n) = it.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
        (n > 0).then(|| s / n as f64)
    };
    let first = mean(&mut samples.iter().filter(|(t, _)| *t < mid).map(|(_, v)| *v))?;
    let second = mean(&mut samples.iter().filter(|(t, _)| *t >= mid).map(|(_, v)| *v))?;
    Some(Trend {
        first_half_mean: first,
        second_half_mean: second,
    })
}

/// Observer that accumulates σ̂² and Ĝ² over the gradients a run computes.
///
/// Each observation costs a full gradient, so only every `stride`-th gradient
/// is looked at.
pub struct ConstantsObserver<'a, S: Scalar, O: GradientOracle<S> + ?Sized> {
    oracle: &'a O,
    tracker: AssumptionTracker,
    stride: u64,
    seen: u64,
    _scalar: std::marker::PhantomData<S>,
}

impl<'a, S: Scalar, O: GradientOracle<S> + ?Sized> ConstantsObserver<'a, S, O> {
    pub fn new(oracle: &'a O, stride: u64) -> Self {
        Self {
            oracle,
            tracker: AssumptionTracker::new(),
            stride: stride.max(1),
            seen: 0,
            _scalar: std::marker::PhantomData,
        }
    }

    pub fn finish(self) -> AssumptionConstants {
        self.tracker.finish(self.oracle.smoothness().to_f64_lossy())
    }
}

impl<S: Scalar, O: GradientOracle<S> + ?Sized> Observer<S> for ConstantsObserver<'_, S, O> {
    fn on_gradient(&mut self, _worker: usize, _param_iter: u64, w: &[S], grad: &[S]) {
        if self.seen % self.stride == 0 {
            self.tracker.observe(self.oracle, w, grad);
        }
        self.seen += 1;
    }

    fn on_iteration(&mut self, _record: &TraceRecord, _w: &[S], _optimizer: &Optimizer<S>) {}
}
