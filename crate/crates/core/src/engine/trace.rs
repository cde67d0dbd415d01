use std::collections::HashMap;
use std::io;

use serde::{Deserialize, Serialize};

/// What happened at server iteration `t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: u64,
    /// Worker `k_t` whose gradient was applied.
    pub worker: usize,
    /// Iteration index of the parameter that gradient was computed on.
    pub ite: u64,
    /// Delay `t − ite`.
    pub tau: u64,
    pub sim_time: f64,
}

/// Parameter iteration `param_iter` was sent to `worker` at `sim_time`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dispatch {
    pub param_iter: u64,
    pub worker: usize,
    pub sim_time: f64,
}

/// One sampled metrics row, describing the state after the update at iteration `t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub t: u64,
    pub sim_time: f64,
    pub loss: f64,
    pub grad_norm2: f64,
    pub tau: u64,
    /// Head bucket (ordered momentum only).
    pub b: Option<u64>,
    pub eta_eff: f64,
}

/// Arrival sequence injected verbatim in place of the event queue.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ScriptedSchedule {
    pub entries: Vec<(usize, u64)>,
}

impl ScriptedSchedule {
    pub fn new(entries: Vec<(usize, u64)>) -> Result<Self, String> {
        let mut last: HashMap<usize, u64> = HashMap::new();
        for (j, &(worker, ite)) in entries.iter().enumerate() {
            if ite > j as u64 {
                return Err(format!("entry {j}: ite {ite} exceeds its position"));
            }
            if let Some(&prev) = last.get(&worker) {
                if ite <= prev {
                    return Err(format!(
                        "entry {j}: worker {worker} ite {ite} does not increase past {prev}"
                    ));
                }
            }
            last.insert(worker, ite);
        }
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn write_trace_csv<W: io::Write>(out: W, trace: &[TraceRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in trace {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_metrics_csv<W: io::Write>(out: W, rows: &[MetricsRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace_csv<R: io::Read>(input: R) -> csv::Result<Vec<TraceRecord>> {
    csv::Reader::from_reader(input).deserialize().collect()
}

pub fn read_metrics_csv<R: io::Read>(input: R) -> csv::Result<Vec<MetricsRow>> {
    csv::Reader::from_reader(input).deserialize().collect()
}

/// Checks that every arrival used a parameter actually dispatched to that worker
/// before the arrival, that per-worker `ite` strictly increases, and that
/// `tau` and `sim_time` are consistent.
pub fn check_trace_legality(trace: &[TraceRecord], dispatches: &[Dispatch]) -> Result<(), String> {
    // (worker, param_iter) -> dispatch time
    let sent: HashMap<(usize, u64), f64> = dispatches
        .iter()
        .map(|d| ((d.worker, d.param_iter), d.sim_time))
        .collect();
    let mut last_ite: HashMap<usize, u64> = HashMap::new();
    let mut last_time = f64::NEG_INFINITY;
    for (j, r) in trace.iter().enumerate() {
        if r.t != j as u64 {
            return Err(format!("record {j} has t = {}", r.t));
        }
        if r.ite > r.t || r.tau != r.t - r.ite {
            return Err(format!("t={}: ite {} / tau {} inconsistent", r.t, r.ite, r.tau));
        }
        match sent.get(&(r.worker, r.ite)) {
            Some(&at) if at <= r.sim_time => {}
            Some(_) => return Err(format!("t={}: arrival precedes its dispatch", r.t)),
            None => {
                return Err(format!(
                    "t={}: parameter {} was never sent to worker {}",
                    r.t, r.ite, r.worker
                ))
            }
        }
        if let Some(&prev) = last_ite.get(&r.worker) {
            if r.ite <= prev {
                return Err(format!("t={}: worker {} ite not increasing", r.t, r.worker));
            }
        }
        last_ite.insert(r.worker, r.ite);
        if r.sim_time < last_time {
            return Err(format!("t={}: sim_time decreased", r.t));
        }
        last_time = r.sim_time;
    }
    Ok(())
}
