//! Discrete-event parameter-server simulation.
//!
//! Workers compute gradients against the parameter version they hold; the
//! server applies one gradient per iteration in completion-time order and then
//! runs the communication scheduler. Events are ordered by `(busy_until,
//! worker_id)`, so simultaneous completions resolve to the smallest worker id.

mod delay;
mod trace;

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeSet, BinaryHeap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::optim::{GradientMsg, OptimError, Optimizer};
use crate::problems::{GradientOracle, GradientSample, ProblemError};
use crate::rng::StreamFactory;
use crate::vector;
use crate::Scalar;

pub use delay::{DelayKind, DelayModel};
pub use trace::{
    check_trace_legality, read_metrics_csv, read_trace_csv, write_metrics_csv, write_trace_csv,
    Dispatch, MetricsRow, ScriptedSchedule, TraceRecord,
};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid engine configuration: {0}")]
    InvalidConfig(String),
    #[error("deadlock at iteration {t}: every worker is waiting")]
    Deadlock { t: u64 },
    #[error("scripted arrival at iteration {t} is illegal: {reason}")]
    ScriptViolation { t: u64, reason: String },
    #[error("gradient oracle failed at iteration {t}: {source}")]
    Oracle {
        t: u64,
        #[source]
        source: ProblemError,
    },
    #[error("update rule failed at iteration {t}: {source}")]
    Optimizer {
        t: u64,
        #[source]
        source: OptimError,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheduler {
    /// Dispatch only once every worker is waiting (barrier).
    Synchronous,
    /// Dispatch to the waiting set after every update.
    Asynchronous,
}

impl Scheduler {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Synchronous => "sync",
            Self::Asynchronous => "async",
        }
    }
}

impl fmt::Display for Scheduler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheduler {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sync" | "synchronous" => Ok(Self::Synchronous),
            "async" | "asynchronous" => Ok(Self::Asynchronous),
            other => Err(format!("unknown scheduler `{other}` (expected sync | async)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WorkerStatus {
    Computing,
    /// Delivered, not yet back in the waiting set.
    Delivering,
    Waiting,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorkerState {
    pub worker_id: usize,
    pub held_param_iter: u64,
    pub busy_until: f64,
    pub status: WorkerStatus,
    /// Number of gradients requested so far, minus one; addresses random draws.
    pub request: u64,
}

#[derive(Clone, Copy, Debug)]
struct Event {
    time: f64,
    worker: usize,
    request: u64,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.worker.cmp(&other.worker))
            .then(self.request.cmp(&other.request))
    }
}

/// A gradient delivery popped from the event queue.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Arrival {
    pub worker: usize,
    pub ite: u64,
    pub time: f64,
}

/// Cluster state: workers, waiting set and the pending-completion queue.
#[derive(Clone, Debug)]
pub struct EngineState {
    workers: Vec<WorkerState>,
    waiting: BTreeSet<usize>,
    queue: BinaryHeap<Reverse<Event>>,
    delay: DelayModel,
    streams: StreamFactory,
    now: f64,
    dispatches: Vec<Dispatch>,
}

impl PartialEq for EngineState {
    fn eq(&self, other: &Self) -> bool {
        let mut a: Vec<_> = self.queue.iter().map(|e| e.0).collect();
        let mut b: Vec<_> = other.queue.iter().map(|e| e.0).collect();
        a.sort();
        b.sort();
        self.workers == other.workers
            && self.waiting == other.waiting
            && a == b
            && self.delay == other.delay
            && self.streams.seed() == other.streams.seed()
            && self.now == other.now
            && self.dispatches == other.dispatches
    }
}

/// Sends parameter 0 to all `workers` and samples their first completion times.
pub fn init_cluster(workers: usize, delay: DelayModel, seed: u64) -> Result<EngineState, EngineError> {
    if workers == 0 {
        return Err(EngineError::InvalidConfig("worker count must be >= 1".into()));
    }
    delay.validate()?;
    let streams = StreamFactory::new(seed);
    let mut state = EngineState {
        workers: Vec::with_capacity(workers),
        waiting: BTreeSet::new(),
        queue: BinaryHeap::with_capacity(workers),
        delay,
        streams,
        now: 0.0,
        dispatches: Vec::new(),
    };
    for k in 0..workers {
        let busy_until = state.delay.sample(&state.streams, k, 0, workers);
        state.workers.push(WorkerState {
            worker_id: k,
            held_param_iter: 0,
            busy_until,
            status: WorkerStatus::Computing,
            request: 0,
        });
        state.queue.push(Reverse(Event {
            time: busy_until,
            worker: k,
            request: 0,
        }));
        state.dispatches.push(Dispatch {
            param_iter: 0,
            worker: k,
            sim_time: 0.0,
        });
    }
    Ok(state)
}

impl EngineState {
    pub fn num_workers(&self) -> usize {
        self.workers.len()
    }

    pub fn workers(&self) -> &[WorkerState] {
        &self.workers
    }

    pub fn worker(&self, k: usize) -> &WorkerState {
        &self.workers[k]
    }

    pub fn waiting(&self) -> &BTreeSet<usize> {
        &self.waiting
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn streams(&self) -> &StreamFactory {
        &self.streams
    }

    pub fn delay(&self) -> &DelayModel {
        &self.delay
    }

    pub fn dispatches(&self) -> &[Dispatch] {
        &self.dispatches
    }

    /// Pops the earliest completion; ties go to the smallest worker id.
    pub fn next_arrival(&mut self, t: u64) -> Result<Arrival, EngineError> {
        while let Some(Reverse(ev)) = self.queue.pop() {
            let w = &mut self.workers[ev.worker];
            if w.status != WorkerStatus::Computing || w.request != ev.request {
                continue; // superseded by a scripted arrival
            }
            w.status = WorkerStatus::Delivering;
            self.now = self.now.max(ev.time);
            return Ok(Arrival {
                worker: ev.worker,
                ite: w.held_param_iter,
                time: self.now,
            });
        }
        Err(EngineError::Deadlock { t })
    }

    /// Forces the next arrival to be `worker` delivering its gradient on `ite`.
    pub fn scripted_arrival(&mut self, t: u64, worker: usize, ite: u64) -> Result<Arrival, EngineError> {
        let violation = |reason: String| EngineError::ScriptViolation { t, reason };
        let w = self
            .workers
            .get_mut(worker)
            .ok_or_else(|| violation(format!("no worker {worker}")))?;
        if w.status != WorkerStatus::Computing {
            return Err(violation(format!("worker {worker} is not computing")));
        }
        if w.held_param_iter != ite {
            return Err(violation(format!(
                "worker {worker} holds parameter {} not {ite}",
                w.held_param_iter
            )));
        }
        w.status = WorkerStatus::Delivering;
        self.now = self.now.max(w.busy_until);
        Ok(Arrival {
            worker,
            ite,
            time: self.now,
        })
    }

    /// Adds a delivering worker to the waiting set.
    pub fn enqueue_waiting(&mut self, worker: usize) {
        self.workers[worker].status = WorkerStatus::Waiting;
        self.waiting.insert(worker);
    }

    /// Runs the communication scheduler after the update at iteration `t`.
    ///
    /// Returns the workers that received parameter `t + 1`, in id order.
    pub fn dispatch(&mut self, scheduler: Scheduler, t: u64) -> Vec<usize> {
        if scheduler == Scheduler::Synchronous && self.waiting.len() != self.workers.len() {
            return Vec::new();
        }
        let k_total = self.workers.len();
        let sent: Vec<usize> = std::mem::take(&mut self.waiting).into_iter().collect();
        for &k in &sent {
            let w = &mut self.workers[k];
            w.request += 1;
            w.held_param_iter = t + 1;
            w.status = WorkerStatus::Computing;
            w.busy_until = self.now + self.delay.sample(&self.streams, k, w.request, k_total);
            self.queue.push(Reverse(Event {
                time: w.busy_until,
                worker: k,
                request: w.request,
            }));
            self.dispatches.push(Dispatch {
                param_iter: t + 1,
                worker: k,
                sim_time: self.now,
            });
        }
        sent
    }
}

/// Hooks into the simulation loop. Both methods default to no-ops.
pub trait Observer<S: Scalar> {
    /// A worker computed `grad` on parameter iteration `param_iter` (value `w`).
    fn on_gradient(&mut self, _worker: usize, _param_iter: u64, _w: &[S], _grad: &[S]) {}

    /// Iteration `record.t` finished; `w` is the updated parameter.
    fn on_iteration(&mut self, _record: &TraceRecord, _w: &[S], _optimizer: &Optimizer<S>) {}
}

impl<S: Scalar> Observer<S> for () {}

impl<S: Scalar, A: Observer<S>, B: Observer<S>> Observer<S> for (A, B) {
    fn on_gradient(&mut self, worker: usize, param_iter: u64, w: &[S], grad: &[S]) {
        self.0.on_gradient(worker, param_iter, w, grad);
        self.1.on_gradient(worker, param_iter, w, grad);
    }

    fn on_iteration(&mut self, record: &TraceRecord, w: &[S], optimizer: &Optimizer<S>) {
        self.0.on_iteration(record, w, optimizer);
        self.1.on_iteration(record, w, optimizer);
    }
}

/// Records the parameter after every iteration.
#[derive(Clone, Debug, Default)]
pub struct ParamRecorder<S: Scalar> {
    pub params: Vec<Vec<S>>,
}

impl<S: Scalar> Observer<S> for ParamRecorder<S> {
    fn on_iteration(&mut self, _record: &TraceRecord, w: &[S], _optimizer: &Optimizer<S>) {
        self.params.push(w.to_vec());
    }
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub iterations: u64,
    pub scheduler: Scheduler,
    pub batch_size: usize,
    /// Metrics are sampled when `t % metric_stride == 0` and at the last iteration.
    pub metric_stride: u64,
    pub script: Option<ScriptedSchedule>,
}

impl RunConfig {
    pub fn new(iterations: u64, scheduler: Scheduler) -> Self {
        Self {
            iterations,
            scheduler,
            batch_size: 1,
            metric_stride: 50,
            script: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunOutput<S: Scalar> {
    pub final_param: Vec<S>,
    pub trace: Vec<TraceRecord>,
    pub metrics: Vec<MetricsRow>,
    pub dispatches: Vec<Dispatch>,
}

/// Drives the server loop for `cfg.iterations` iterations.
///
/// Gradients are evaluated when a worker receives its parameter (they are pure
/// functions of the parameter and the `(worker, request)` sample address) and
/// delivered at the worker's completion time.
pub fn run<S, O, Obs>(
    state: &mut EngineState,
    cfg: &RunConfig,
    optimizer: &mut Optimizer<S>,
    problem: &O,
    w0: Vec<S>,
    observer: &mut Obs,
) -> Result<RunOutput<S>, EngineError>
where
    S: Scalar,
    O: GradientOracle<S> + ?Sized,
    Obs: Observer<S>,
{
    if cfg.iterations == 0 {
        return Err(EngineError::InvalidConfig("iteration count must be >= 1".into()));
    }
    if cfg.batch_size == 0 || cfg.metric_stride == 0 {
        return Err(EngineError::InvalidConfig("batch size and metric stride must be >= 1".into()));
    }
    if optimizer.hyper().workers != state.num_workers() {
        return Err(EngineError::InvalidConfig(format!(
            "optimizer configured for {} workers, cluster has {}",
            optimizer.hyper().workers,
            state.num_workers()
        )));
    }
    if !optimizer.kind().supports(cfg.scheduler) {
        return Err(EngineError::InvalidConfig(format!(
            "{} cannot run under the {} scheduler",
            optimizer.kind(),
            cfg.scheduler
        )));
    }
    if let Some(script) = &cfg.script {
        if (script.len() as u64) < cfg.iterations {
            return Err(EngineError::InvalidConfig(format!(
                "script has {} entries, {} iterations requested",
                script.len(),
                cfg.iterations
            )));
        }
    }
    problem
        .check_param(&w0)
        .map_err(|source| EngineError::Oracle { t: 0, source })?;

    let k_total = state.num_workers();
    let mut w = w0;
    let mut pending: Vec<Option<GradientMsg<S>>> = vec![None; k_total];

    for k in 0..k_total {
        if state.worker(k).status == WorkerStatus::Computing {
            compute_gradient(state, cfg, optimizer, problem, observer, &mut pending, k, &w, 0)?;
        }
    }

    let mut trace = Vec::with_capacity(cfg.iterations as usize);
    let mut metrics = Vec::new();
    for t in 0..cfg.iterations {
        let arrival = match &cfg.script {
            Some(script) => {
                let (worker, ite) = script.entries[t as usize];
                state.scripted_arrival(t, worker, ite)?
            }
            None => state.next_arrival(t)?,
        };
        let msg = pending[arrival.worker]
            .take()
            .expect("computing worker has a pending gradient");
        debug_assert_eq!(msg.ite, arrival.ite);
        let waiting_empty = state.waiting().is_empty();
        optimizer
            .step(&mut w, &msg, t, waiting_empty)
            .map_err(|source| EngineError::Optimizer { t, source })?;
        state.enqueue_waiting(arrival.worker);

        let record = TraceRecord {
            t,
            worker: arrival.worker,
            ite: arrival.ite,
            tau: t - arrival.ite,
            sim_time: arrival.time,
        };
        trace.push(record);
        observer.on_iteration(&record, &w, optimizer);

        if t % cfg.metric_stride == 0 || t + 1 == cfg.iterations {
            metrics.push(MetricsRow {
                t,
                sim_time: arrival.time,
                loss: problem.loss(&w).to_f64_lossy(),
                grad_norm2: vector::norm2(&problem.full_gradient(&w)).to_f64_lossy(),
                tau: record.tau,
                b: optimizer.head_bucket(),
                eta_eff: optimizer.hyper().effective_eta(t).to_f64_lossy(),
            });
        }

        for k in state.dispatch(cfg.scheduler, t) {
            compute_gradient(state, cfg, optimizer, problem, observer, &mut pending, k, &w, t)?;
        }
    }

    Ok(RunOutput {
        final_param: w,
        trace,
        metrics,
        dispatches: state.dispatches().to_vec(),
    })
}

/// Worker `worker` evaluates its gradient on the parameter it just received.
#[allow(clippy::too_many_arguments)]
fn compute_gradient<S, O, Obs>(
    state: &EngineState,
    cfg: &RunConfig,
    optimizer: &mut Optimizer<S>,
    problem: &O,
    observer: &mut Obs,
    pending: &mut [Option<GradientMsg<S>>],
    worker: usize,
    w: &[S],
    t: u64,
) -> Result<(), EngineError>
where
    S: Scalar,
    O: GradientOracle<S> + ?Sized,
    Obs: Observer<S>,
{
    let ws = state.worker(worker);
    let sample = GradientSample::draw(
        state.streams(),
        worker,
        ws.request,
        ws.held_param_iter,
        problem.num_samples(),
        cfg.batch_size,
    );
    let grad = problem
        .stochastic_grad(w, &sample)
        .map_err(|source| EngineError::Oracle { t, source })?;
    observer.on_gradient(worker, ws.held_param_iter, w, &grad);
    pending[worker] = Some(optimizer.worker_payload(worker, grad, ws.held_param_iter));
    Ok(())
}
