//! Stochastic-gradient oracles with exact full gradients.
//!
//! Every oracle is a finite-sum objective `F(w) = (1/n) Σ_i f(w; i)` with an
//! optional `λ/2 ‖w‖²` weight-decay term added to every `f(w; i)`.

mod logistic;
mod net;
mod quadratic;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{Purpose, StreamFactory};
use crate::vector;
use crate::Scalar;

pub use logistic::LogisticRegression;
pub use net::TwoLayerNet;
pub use quadratic::NoisyQuadratic;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("sample index {index} out of range for dataset of size {n}")]
    InvalidSample { index: usize, n: usize },
    #[error("parameter has length {got}, expected {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("invalid problem spec: {0}")]
    InvalidSpec(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    NoisyQuadratic,
    LogisticRegression,
    TwoLayerNet,
}

impl ProblemKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::NoisyQuadratic => "noisy_quadratic",
            Self::LogisticRegression => "logistic_regression",
            Self::TwoLayerNet => "two_layer_net",
        }
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProblemKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "noisy_quadratic" => Ok(Self::NoisyQuadratic),
            "logistic_regression" => Ok(Self::LogisticRegression),
            "two_layer_net" => Ok(Self::TwoLayerNet),
            other => Err(format!(
                "unknown problem `{other}` (expected noisy_quadratic | logistic_regression | two_layer_net)"
            )),
        }
    }
}

/// Construction parameters for a synthetic problem.
///
/// `dim` is the feature dimension. For the quadratic and logistic problems it is
/// also the parameter dimension; the two-layer net has `hidden * (dim + 1)`
/// parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    pub dim: usize,
    pub samples: usize,
    /// Gradient-noise scale σ (quadratic only).
    pub noise: f64,
    /// Quadratic spectrum lies in `[min_eig, max_eig]`; `max_eig` is `L`.
    pub min_eig: f64,
    pub max_eig: f64,
    /// Label flip probability (logistic only).
    pub label_flip: f64,
    /// Hidden width (two-layer net only).
    pub hidden: usize,
    pub weight_decay: f64,
    pub seed: u64,
}

impl ProblemSpec {
    pub fn new(kind: ProblemKind, dim: usize, samples: usize) -> Self {
        Self {
            kind,
            dim,
            samples,
            noise: 1.0,
            min_eig: 0.1,
            max_eig: 1.0,
            label_flip: 0.05,
            hidden: 16,
            weight_decay: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), ProblemError> {
        let bad = |m: &str| Err(ProblemError::InvalidSpec(m.to_string()));
        if self.dim == 0 {
            return bad("dim must be >= 1");
        }
        if self.samples == 0 {
            return bad("samples must be >= 1");
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad("noise must be finite and >= 0");
        }
        if !(self.min_eig >= 0.0 && self.max_eig > 0.0 && self.min_eig <= self.max_eig) {
            return bad("quadratic spectrum needs 0 <= min_eig <= max_eig, max_eig > 0");
        }
        if !(0.0..=0.5).contains(&self.label_flip) {
            return bad("label_flip must lie in [0, 0.5]");
        }
        if self.kind == ProblemKind::TwoLayerNet && self.hidden == 0 {
            return bad("hidden must be >= 1");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be finite and >= 0");
        }
        Ok(())
    }

    pub fn param_dim(&self) -> usize {
        match self.kind {
            ProblemKind::TwoLayerNet => self.hidden * (self.dim + 1),
            _ => self.dim,
        }
    }
}

/// A worker's mini-batch draw `ξ`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GradientSample {
    pub worker: usize,
    pub request: u64,
    pub base_param_iter: u64,
    pub indices: Vec<usize>,
}

impl GradientSample {
    /// Uniform draw with replacement from `[n]`, addressed by `(worker, request)`.
    pub fn draw(
        streams: &StreamFactory,
        worker: usize,
        request: u64,
        base_param_iter: u64,
        n: usize,
        batch: usize,
    ) -> Self {
        let mut rng = streams.stream(Purpose::DataSampling, worker as u64, request);
        let indices = (0..batch).map(|_| rng.random_range(0..n)).collect();
        Self {
            worker,
            request,
            base_param_iter,
            indices,
        }
    }
}

/// A finite-sum objective with per-sample gradients.
pub trait GradientOracle<S: Scalar> {
    fn param_dim(&self) -> usize;

    fn num_samples(&self) -> usize;

    fn weight_decay(&self) -> S;

    /// `f(w; i)` without the weight-decay term.
    fn raw_sample_loss(&self, w: &[S], index: usize) -> S;

    /// Adds `∇f(w; i)` (without weight decay) into `out`.
    fn add_raw_sample_grad(&self, w: &[S], index: usize, out: &mut [S]);

    fn initial_point(&self) -> Vec<S>;

    /// Smoothness constant `L` of `F`, analytic or estimated.
    fn smoothness(&self) -> S;

    fn check_param(&self, w: &[S]) -> Result<(), ProblemError> {
        if w.len() != self.param_dim() {
            return Err(ProblemError::DimensionMismatch {
                got: w.len(),
                expected: self.param_dim(),
            });
        }
        Ok(())
    }

    fn check_index(&self, index: usize) -> Result<(), ProblemError> {
        if index >= self.num_samples() {
            return Err(ProblemError::InvalidSample {
                index,
                n: self.num_samples(),
            });
        }
        Ok(())
    }

    fn sample_loss(&self, w: &[S], index: usize) -> Result<S, ProblemError> {
        self.check_param(w)?;
        self.check_index(index)?;
        let half = S::of(0.5);
        Ok(self.raw_sample_loss(w, index) + half * self.weight_decay() * vector::norm2(w))
    }

    /// Mean of `∇f(w; i)` over the sample's indices.
    fn stochastic_grad(&self, w: &[S], sample: &GradientSample) -> Result<Vec<S>, ProblemError> {
        self.check_param(w)?;
        if sample.indices.is_empty() {
            return Err(ProblemError::InvalidSpec("empty mini-batch".into()));
        }
        for &i in &sample.indices {
            self.check_index(i)?;
        }
        let mut out = vec![S::zero(); w.len()];
        for &i in &sample.indices {
            self.add_raw_sample_grad(w, i, &mut out);
        }
        let inv = S::one() / S::of_usize(sample.indices.len());
        vector::scale(inv, &mut out);
        vector::axpy(self.weight_decay(), w, &mut out);
        Ok(out)
    }

    /// Exact `∇F(w)`.
    fn full_gradient(&self, w: &[S]) -> Vec<S> {
        let mut out = vec![S::zero(); w.len()];
        for i in 0..self.num_samples() {
            self.add_raw_sample_grad(w, i, &mut out);
        }
        vector::scale(S::one() / S::of_usize(self.num_samples()), &mut out);
        vector::axpy(self.weight_decay(), w, &mut out);
        out
    }

    /// Exact `F(w)`.
    fn loss(&self, w: &[S]) -> S {
        let n = self.num_samples();
        let total: S = (0..n).map(|i| self.raw_sample_loss(w, i)).sum();
        total / S::of_usize(n) + S::of(0.5) * self.weight_decay() * vector::norm2(w)
    }
}

/// Any of the built-in problems.
#[derive(Clone, Debug)]
pub enum Problem<S: Scalar> {
    Quadratic(NoisyQuadratic<S>),
    Logistic(LogisticRegression<S>),
    Net(TwoLayerNet<S>),
}

impl<S: Scalar> Problem<S> {
    pub fn build(spec: &ProblemSpec) -> Result<Self, ProblemError> {
        spec.validate()?;
        Ok(match spec.kind {
            ProblemKind::NoisyQuadratic => Self::Quadratic(NoisyQuadratic::generate(spec)),
            ProblemKind::LogisticRegression => Self::Logistic(LogisticRegression::generate(spec)),
            ProblemKind::TwoLayerNet => Self::Net(TwoLayerNet::generate(spec)),
        })
    }

    fn inner(&self) -> &dyn GradientOracle<S> {
        match self {
            Self::Quadratic(p) => p,
            Self::Logistic(p) => p,
            Self::Net(p) => p,
        }
    }

    /// Dataset rows for inspection: a header and one row per sample.
    pub fn dataset_rows(&self) -> (Vec<String>, Vec<Vec<S>>) {
        match self {
            Self::Quadratic(p) => p.dataset_rows(),
            Self::Logistic(p) => p.dataset_rows(),
            Self::Net(p) => p.dataset_rows(),
        }
    }
}

impl<S: Scalar> GradientOracle<S> for Problem<S> {
    fn param_dim(&self) -> usize {
        self.inner().param_dim()
    }
    fn num_samples(&self) -> usize {
        self.inner().num_samples()
    }
    fn weight_decay(&self) -> S {
        self.inner().weight_decay()
    }
    fn raw_sample_loss(&self, w: &[S], index: usize) -> S {
        self.inner().raw_sample_loss(w, index)
    }
    fn add_raw_sample_grad(&self, w: &[S], index: usize, out: &mut [S]) {
        self.inner().add_raw_sample_grad(w, index, out)
    }
    fn initial_point(&self) -> Vec<S> {
        self.inner().initial_point()
    }
    fn smoothness(&self) -> S {
        self.inner().smoothness()
    }
    fn stochastic_grad(&self, w: &[S], sample: &GradientSample) -> Result<Vec<S>, ProblemError> {
        self.inner().stochastic_grad(w, sample)
    }
    fn full_gradient(&self, w: &[S]) -> Vec<S> {
        self.inner().full_gradient(w)
    }
    fn loss(&self, w: &[S]) -> S {
        self.inner().loss(w)
    }
}

/// Observed constants of the bounded-variance / bounded-moment / smoothness
/// assumptions over a realised run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AssumptionConstants {
    /// `max ‖∇f − ∇F‖²` over observed gradients.
    pub sigma2_hat: f64,
    /// `max ‖∇f‖²` over observed gradients.
    pub g2_hat: f64,
    /// `max ‖∇F‖²` at the observed base points.
    pub full_g2_max: f64,
    pub smoothness: f64,
    pub observations: usize,
}

/// Running maxima for [`AssumptionConstants`].
#[derive(Clone, Debug)]
pub struct AssumptionTracker {
    sigma2_hat: f64,
    g2_hat: f64,
    full_g2_max: f64,
    observations: usize,
}

impl Default for AssumptionTracker {
    fn default() -> Self {
        Self::new()
    }
}

impl AssumptionTracker {
    pub fn new() -> Self {
        Self {
            sigma2_hat: 0.0,
            g2_hat: 0.0,
            full_g2_max: 0.0,
            observations: 0,
        }
    }

    /// Records a stochastic gradient `g` computed at `w`.
    pub fn observe<S: Scalar, O: GradientOracle<S> + ?Sized>(&mut self, oracle: &O, w: &[S], g: &[S]) {
        let full = oracle.full_gradient(w);
        self.observe_with_full(&full, g);
    }

    pub fn observe_with_full<S: Scalar>(&mut self, full: &[S], g: &[S]) {
        let dev = vector::norm2(&vector::sub(g, full)).to_f64_lossy();
        self.sigma2_hat = self.sigma2_hat.max(dev);
        self.g2_hat = self.g2_hat.max(vector::norm2(g).to_f64_lossy());
        self.full_g2_max = self.full_g2_max.max(vector::norm2(full).to_f64_lossy());
        self.observations += 1;
    }

    pub fn finish(&self, smoothness: f64) -> AssumptionConstants {
        AssumptionConstants {
            sigma2_hat: self.sigma2_hat,
            g2_hat: self.g2_hat,
            full_g2_max: self.full_g2_max,
            smoothness,
            observations: self.observations,
        }
    }
}

/// `(σ̂², Ĝ², L)` over the given `(w, g)` observations.
pub fn assumption_constants<'a, S, O, I>(oracle: &O, observed: I) -> AssumptionConstants
where
    S: Scalar,
    O: GradientOracle<S> + ?Sized,
    I: IntoIterator<Item = (&'a [S], &'a [S])>,
{
    let mut tracker = AssumptionTracker::new();
    for (w, g) in observed {
        tracker.observe(oracle, w, g);
    }
    tracker.finish(oracle.smoothness().to_f64_lossy())
}

/// Largest Hessian eigenvalue of `F` at `w` by power iteration on
/// central-difference Hessian-vector products.
pub fn estimate_smoothness<S, O>(oracle: &O, w: &[S], iterations: usize, step: f64) -> S
where
    S: Scalar,
    O: GradientOracle<S> + ?Sized,
{
    let d = w.len();
    let h = S::of(step);
    let mut v: Vec<S> = (0..d).map(|i| S::one() + S::of(0.01 * i as f64)).collect();
    let n = vector::norm(&v);
    vector::scale(S::one() / n, &mut v);
    let mut lambda = S::zero();
    for _ in 0..iterations {
        let hv = fd_hessian_vector(oracle, w, &v, h);
        let norm = vector::norm(&hv);
        if norm == S::zero() {
            return S::zero();
        }
        lambda = vector::dot(&v, &hv);
        v = hv;
        vector::scale(S::one() / norm, &mut v);
    }
    lambda.abs()
}

fn fd_hessian_vector<S, O>(oracle: &O, w: &[S], v: &[S], h: S) -> Vec<S>
where
    S: Scalar,
    O: GradientOracle<S> + ?Sized,
{
    let mut plus = w.to_vec();
    vector::axpy(h, v, &mut plus);
    let mut minus = w.to_vec();
    vector::axpy(-h, v, &mut minus);
    let gp = oracle.full_gradient(&plus);
    let gm = oracle.full_gradient(&minus);
    let two_h = h + h;
    gp.iter().zip(&gm).map(|(&a, &b)| (a - b) / two_h).collect()
}

pub(crate) fn gaussian<S: Scalar>(rng: &mut ChaCha8Rng) -> S {
    let x: f64 = StandardNormal.sample(rng);
    S::of(x)
}

pub(crate) fn problem_stream(spec: &ProblemSpec, lane: u64) -> ChaCha8Rng {
    StreamFactory::new(spec.seed).stream(Purpose::Problem, lane, 0)
}
