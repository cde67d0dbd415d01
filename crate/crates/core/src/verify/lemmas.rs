//! Lockstep checker for the ordered-momentum gap identities.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use super::aux::{advance_aux, AuxState};
use super::ResidualReport;
use crate::engine::{Observer, Scheduler, TraceRecord};
use crate::optim::{bucket_index, compensation_coefficient, momentum_weight, Optimizer, OptimizerKind};
use crate::vector;
use crate::Scalar;

pub const IDENTITY_TOLERANCE: f64 = 1e-9;
pub const LEDGER_TOLERANCE: f64 = 1e-10;
pub const LEDGER_STRIDE: u64 = 100;

/// One row of the optional per-iteration detail log.
#[derive(Clone, Debug, Serialize)]
pub struct DetailRow {
    pub t: u64,
    pub lemma1_rel: Option<f64>,
    pub lemma2_rel: Option<f64>,
    pub in_flight: usize,
}

/// Observer that evolves the analysis sequences next to an ordered-momentum run
/// and evaluates every identity on the fly.
///
/// Lemma 1/2 gaps are checked after every iteration under the asynchronous
/// scheduler; under the synchronous scheduler they are checked at round
/// boundaries, where nothing is in flight and the gap must vanish.
#[derive(Debug)]
pub struct LemmaVerifier<S: Scalar> {
    scheduler: Scheduler,
    eta: S,
    beta: S,
    workers: usize,
    w0: Vec<S>,
    aux: Option<AuxState<S>>,
    first_bucket: BTreeMap<usize, Vec<S>>,
    /// slot -> gradient, waiting to be consumed by the aux sequences
    pending: BTreeMap<u64, Vec<S>>,
    next_slot: u64,
    /// worker -> (ite, raw gradient) still being computed or in transit
    in_flight: HashMap<usize, (u64, Vec<S>)>,
    /// (ite, eta, grad) of every received gradient, for the ledger
    received: Vec<(u64, S, Vec<S>)>,
    g2_max: f64,
    lemma1: ResidualReport,
    lemma2: ResidualReport,
    lemma3: ResidualReport,
    /// ‖ŷ_t − ŵ_t‖² per aux index, bound evaluated at the end
    yw_gap2: Vec<(u64, f64)>,
    ledger: ResidualReport,
    head_bucket: ResidualReport,
    notices: Vec<String>,
    detail: Option<Vec<DetailRow>>,
    last_t: Option<u64>,
}

impl<S: Scalar> LemmaVerifier<S> {
    pub fn new(w0: &[S], eta: S, beta: S, workers: usize, scheduler: Scheduler) -> Self {
        Self {
            scheduler,
            eta,
            beta,
            workers,
            w0: w0.to_vec(),
            aux: None,
            first_bucket: BTreeMap::new(),
            pending: BTreeMap::new(),
            next_slot: 1,
            in_flight: HashMap::new(),
            received: Vec::new(),
            g2_max: 0.0,
            lemma1: ResidualReport::new("lemma1_momentum_gap", IDENTITY_TOLERANCE),
            lemma2: ResidualReport::new("lemma2_parameter_gap", IDENTITY_TOLERANCE),
            lemma3: ResidualReport::new("lemma3_y_identity", IDENTITY_TOLERANCE),
            yw_gap2: Vec::new(),
            ledger: ResidualReport::new("momentum_ledger", LEDGER_TOLERANCE),
            head_bucket: ResidualReport::new("head_bucket_law", 0.0),
            notices: Vec::new(),
            detail: None,
            last_t: None,
        }
    }

    /// Keeps a per-iteration detail log.
    pub fn with_detail(mut self) -> Self {
        self.detail = Some(Vec::new());
        self
    }

    /// Feeds available gradients to the aux sequences until index `target`.
    fn advance_to(&mut self, target: u64) -> bool {
        if self.aux.is_none() {
            if self.first_bucket.len() < self.workers {
                return false;
            }
            let bucket: Vec<Vec<S>> = self.first_bucket.values().cloned().collect();
            let aux = AuxState::init(&self.w0, &bucket, self.eta, self.beta, self.workers)
                .expect("first bucket is complete");
            self.record_aux(&aux);
            self.aux = Some(aux);
        }
        loop {
            let t = self.aux.as_ref().expect("initialised").t;
            if t >= target {
                return t == target;
            }
            let Some(g) = self.pending.remove(&t) else {
                return false;
            };
            let aux = self.aux.as_mut().expect("initialised");
            advance_aux(aux, t, &g).expect("slots are consumed in order");
            let snapshot = aux.clone();
            self.record_aux(&snapshot);
        }
    }

    /// Lemma 3 and the Lemma 4 gap at the aux state's current index.
    fn record_aux(&mut self, aux: &AuxState<S>) {
        let t = aux.t;
        let gap = vector::norm2(&vector::sub(&aux.y_hat, &aux.w_hat)).to_f64_lossy();
        self.yw_gap2.push((t, gap));
        let k = self.workers as u64;
        if t > 1 && (t - 1) % k == 0 {
            let old = aux.w_hat_at(t - k).expect("history holds K + 1 entries");
            let inv = S::one() / (S::one() - self.beta);
            let rhs: Vec<S> = aux
                .w_hat
                .iter()
                .zip(old)
                .map(|(&a, &b)| (a - self.beta * b) * inv)
                .collect();
            let residual = vector::sub(&aux.y_hat, &rhs);
            self.lemma3.record(t, &residual, &aux.y_hat);
        } else {
            self.lemma3.skip();
        }
    }

    /// Ordered-momentum gap identities at state index `i` (after `i` updates).
    fn check_gaps(&mut self, i: u64, w: &[S], u: &[S]) -> (Option<f64>, Option<f64>) {
        let target = match self.scheduler {
            Scheduler::Asynchronous => i,
            Scheduler::Synchronous => {
                let k = self.workers as u64;
                if i % k != 0 {
                    self.lemma1.skip();
                    self.lemma2.skip();
                    return (None, None);
                }
                (i / k - 1) * k + 1
            }
        };
        if !self.advance_to(target) {
            self.lemma1.skip();
            self.lemma2.skip();
            return (None, None);
        }
        let aux = self.aux.as_ref().expect("advanced");
        let head = bucket_index(i - 1, self.workers);
        let d = w.len();
        let mut rhs_u = vec![S::zero(); d];
        let mut rhs_w = vec![S::zero(); d];
        let mut outstanding: Vec<_> = self.in_flight.iter().collect();
        outstanding.sort_by_key(|(k, _)| **k);
        for (_, (ite, g)) in outstanding {
            let delta = head - bucket_index(*ite, self.workers);
            vector::axpy(self.eta * momentum_weight(self.beta, delta), g, &mut rhs_u);
            vector::axpy(
                -self.eta * compensation_coefficient(self.beta, delta),
                g,
                &mut rhs_w,
            );
        }
        let lhs_u = vector::sub(&aux.u_hat, u);
        let lhs_w = vector::sub(&aux.w_hat, w);
        let r1 = self.lemma1.record(i, &vector::sub(&lhs_u, &rhs_u), &lhs_u);
        let r2 = self.lemma2.record(i, &vector::sub(&lhs_w, &rhs_w), &lhs_w);
        (Some(r1), Some(r2))
    }

    fn check_ledger(&mut self, i: u64, u: &[S], head: u64) {
        let mut total = vec![S::zero(); u.len()];
        for (ite, eta, g) in &self.received {
            let delta = head - bucket_index(*ite, self.workers);
            vector::axpy(*eta * momentum_weight(self.beta, delta), g, &mut total);
        }
        let residual = vector::sub(&total, u);
        self.ledger.record(i, &residual, u);
    }

    /// Final report. Lemma 4 uses `Ĝ² = max ‖g‖²` over every gradient computed.
    pub fn finish(mut self) -> LemmaReport {
        // extend the aux sequences over whatever contiguous slots remain
        let last = self.next_slot;
        self.advance_to(last);
        if self.aux.is_none() {
            self.notices
                .push("initial bucket incomplete: analysis sequences never started".into());
        } else if let Some(aux) = &self.aux {
            if aux.t < last {
                self.notices.push(format!(
                    "analysis sequences truncated at index {} (slot {} missing)",
                    aux.t, aux.t
                ));
            }
        }

        let k = self.workers as f64;
        let eta = self.eta.to_f64_lossy();
        let one_minus_beta = 1.0 - self.beta.to_f64_lossy();
        let bound = 4.0 * eta * eta * k * k * self.g2_max / one_minus_beta.powi(4);
        let mut lemma4 = BoundReport {
            name: "lemma4_y_w_gap_bound".into(),
            bound,
            g2_hat: self.g2_max,
            max_gap2: 0.0,
            at: None,
            max_excess_rel: 0.0,
            checked: 0,
            violations: 0,
            tolerance: IDENTITY_TOLERANCE,
            passed: true,
        };
        for (t, gap) in &self.yw_gap2 {
            lemma4.checked += 1;
            if lemma4.at.is_none() || *gap > lemma4.max_gap2 {
                lemma4.max_gap2 = *gap;
                lemma4.at = Some(*t);
            }
            if *gap > bound {
                lemma4.violations += 1;
                let excess = (gap - bound) / bound.max(f64::MIN_POSITIVE);
                lemma4.max_excess_rel = lemma4.max_excess_rel.max(excess);
            }
        }
        lemma4.passed = lemma4.max_excess_rel <= IDENTITY_TOLERANCE;
        if lemma4.violations > 0 {
            self.notices.push(format!(
                "lemma 4 bound exceeded at {} indices (max relative excess {:e})",
                lemma4.violations, lemma4.max_excess_rel
            ));
        }

        for r in [
            &mut self.lemma1,
            &mut self.lemma2,
            &mut self.lemma3,
            &mut self.ledger,
            &mut self.head_bucket,
        ] {
            r.finalize();
        }
        LemmaReport {
            lemma1: self.lemma1,
            lemma2: self.lemma2,
            lemma3: self.lemma3,
            lemma4,
            ledger: self.ledger,
            head_bucket: self.head_bucket,
            notices: self.notices,
            detail: self.detail.unwrap_or_default(),
        }
    }
}

impl<S: Scalar> Observer<S> for LemmaVerifier<S> {
    fn on_gradient(&mut self, worker: usize, param_iter: u64, _w: &[S], grad: &[S]) {
        self.g2_max = self.g2_max.max(vector::norm2(grad).to_f64_lossy());
        if param_iter == 0 {
            self.first_bucket.insert(worker, grad.to_vec());
        } else {
            let slot = self.next_slot;
            self.next_slot += 1;
            if self.scheduler == Scheduler::Asynchronous && slot != param_iter {
                self.notices.push(format!(
                    "slot {slot} assigned to a gradient on parameter {param_iter}"
                ));
            }
            self.pending.insert(slot, grad.to_vec());
        }
        self.in_flight.insert(worker, (param_iter, grad.to_vec()));
    }

    fn on_iteration(&mut self, record: &TraceRecord, w: &[S], optimizer: &Optimizer<S>) {
        debug_assert_eq!(optimizer.kind(), OptimizerKind::Ormo);
        let t = record.t;
        let i = t + 1;
        self.last_t = Some(t);
        if let Some((ite, g)) = self.in_flight.remove(&record.worker) {
            debug_assert_eq!(ite, record.ite);
            let eta = optimizer.hyper().effective_eta(t);
            self.received.push((ite, eta, g));
        }
        let Some(m) = optimizer.momentum() else {
            return;
        };
        let (r1, r2) = self.check_gaps(i, w, &m.u);

        let expected_head = match self.scheduler {
            Scheduler::Asynchronous => bucket_index(t, self.workers),
            Scheduler::Synchronous => t / self.workers as u64,
        };
        let diff = (m.b as f64 - expected_head as f64).abs();
        self.head_bucket.record_scalar(i, diff);

        if i % LEDGER_STRIDE == 0 {
            self.check_ledger(i, &m.u, m.b);
        }
        if let Some(detail) = &mut self.detail {
            detail.push(DetailRow {
                t,
                lemma1_rel: r1,
                lemma2_rel: r2,
                in_flight: self.in_flight.len(),
            });
        }
    }
}

/// Inequality check against `4η²K²Ĝ²/(1−β)⁴`.
#[derive(Clone, Debug, Serialize)]
pub struct BoundReport {
    pub name: String,
    pub bound: f64,
    pub g2_hat: f64,
    pub max_gap2: f64,
    pub at: Option<u64>,
    pub max_excess_rel: f64,
    pub checked: u64,
    pub violations: u64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct LemmaReport {
    pub lemma1: ResidualReport,
    pub lemma2: ResidualReport,
    pub lemma3: ResidualReport,
    pub lemma4: BoundReport,
    pub ledger: ResidualReport,
    pub head_bucket: ResidualReport,
    pub notices: Vec<String>,
    #[serde(skip)]
    pub detail: Vec<DetailRow>,
}

impl LemmaReport {
    pub fn passed(&self) -> bool {
        self.lemma1.passed
            && self.lemma2.passed
            && self.lemma3.passed
            && self.lemma4.passed
            && self.ledger.passed
            && self.head_bucket.passed
    }

    pub fn residuals(&self) -> [&ResidualReport; 5] {
        [
            &self.lemma1,
            &self.lemma2,
            &self.lemma3,
            &self.ledger,
            &self.head_bucket,
        ]
    }
}
