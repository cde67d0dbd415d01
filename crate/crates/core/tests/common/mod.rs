#![allow(dead_code)]

use std::io::Write;

use ormo::engine::{self, DelayModel, Observer, ParamRecorder, RunConfig, RunOutput, Scheduler};
use ormo::optim::{HyperParams, LrSchedule, Optimizer, OptimizerKind};
use ormo::problems::{GradientOracle, Problem, ProblemKind, ProblemSpec};

/// Writes straight to the process stdout so the line survives test capture.
pub fn report(line: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
}

pub fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

pub fn quadratic(dim: usize, samples: usize, seed: u64) -> Problem<f64> {
    let mut spec = ProblemSpec::new(ProblemKind::NoisyQuadratic, dim, samples);
    spec.seed = seed;
    Problem::build(&spec).unwrap()
}

pub fn stragglers() -> DelayModel {
    DelayModel::default().with_stragglers(1.0 / 16.0, 10.0)
}

#[derive(Clone, Debug)]
pub struct Setup {
    pub kind: OptimizerKind,
    pub scheduler: Scheduler,
    pub workers: usize,
    pub eta: f64,
    pub beta: f64,
    pub iterations: u64,
    pub batch: usize,
    pub delay: DelayModel,
    pub seed: u64,
    pub metric_stride: u64,
}

impl Setup {
    pub fn new(kind: OptimizerKind, workers: usize, iterations: u64) -> Self {
        Self {
            kind,
            scheduler: kind.default_scheduler(),
            workers,
            eta: 0.01,
            beta: 0.9,
            iterations,
            batch: 1,
            delay: stragglers(),
            seed: 7,
            metric_stride: 1_000_000,
        }
    }

    pub fn run_with<O, Obs>(&self, problem: &O, observer: &mut Obs) -> RunOutput<f64>
    where
        O: GradientOracle<f64> + ?Sized,
        Obs: Observer<f64>,
    {
        self.run_scripted(problem, observer, None)
    }

    pub fn run_scripted<O, Obs>(
        &self,
        problem: &O,
        observer: &mut Obs,
        script: Option<engine::ScriptedSchedule>,
    ) -> RunOutput<f64>
    where
        O: GradientOracle<f64> + ?Sized,
        Obs: Observer<f64>,
    {
        let mut state = engine::init_cluster(self.workers, self.delay, self.seed).unwrap();
        let hp = HyperParams::new(self.eta, self.beta, self.workers, LrSchedule::default()).unwrap();
        let mut opt = Optimizer::new(self.kind, hp, problem.param_dim());
        let mut cfg = RunConfig::new(self.iterations, self.scheduler);
        cfg.batch_size = self.batch;
        cfg.metric_stride = self.metric_stride;
        cfg.script = script;
        engine::run(&mut state, &cfg, &mut opt, problem, problem.initial_point(), observer).unwrap()
    }

    /// Parameters after every iteration.
    pub fn params<O: GradientOracle<f64> + ?Sized>(&self, problem: &O) -> (RunOutput<f64>, Vec<Vec<f64>>) {
        let mut rec = ParamRecorder::default();
        let out = self.run_with(problem, &mut rec);
        (out, rec.params)
    }
}

pub fn max_coord_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs()))
        .fold(0.0, |m: f64, d| if d.is_nan() { f64::INFINITY } else { m.max(d) })
}
