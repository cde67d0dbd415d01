//! Server-side update rules.
//!
//! Each rule is a plain state transition on `(w, state, message)`. The
//! [`Optimizer`] wrapper selects a rule by name and carries its state between
//! iterations of the simulation loop.

mod baselines;
mod ormo;
mod schedule;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::Scheduler;
use crate::vector;
use crate::Scalar;

pub use baselines::{
    asgd_step, local_momentum_apply, local_momentum_update, minibatch_sgdm_reference,
    naive_asgdm_step, ssgdm_global_step,
};
pub use ormo::{
    advance_head, bucket_index, compensation_coefficient, momentum_weight, ormo_should_advance,
    ormo_step,
};
pub use schedule::LrSchedule;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimError {
    #[error(
        "gradient from parameter iteration {ite} (bucket {bucket}) arrived at iteration {t} \
         ahead of head bucket {head}"
    )]
    OrderingViolation { t: u64, ite: u64, bucket: u64, head: u64 },
    #[error("non-finite gradient from worker {worker} (parameter iteration {ite})")]
    NonFiniteGradient { worker: usize, ite: u64 },
    #[error("gradient has length {got}, parameter has length {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("invalid hyper-parameters: {0}")]
    InvalidHyperParams(String),
    #[error("optimizer `{optimizer}` cannot run under the {scheduler} scheduler")]
    UnsupportedScheduler {
        optimizer: OptimizerKind,
        scheduler: Scheduler,
    },
}

/// Learning rate, momentum coefficient, worker count and step decay.
#[derive(Clone, Debug, PartialEq)]
pub struct HyperParams<S: Scalar> {
    pub eta: S,
    pub beta: S,
    pub workers: usize,
    pub lr_schedule: LrSchedule<S>,
}

impl<S: Scalar> HyperParams<S> {
    pub fn new(eta: S, beta: S, workers: usize, lr_schedule: LrSchedule<S>) -> Result<Self, OptimError> {
        if !(eta.is_finite() && eta > S::zero()) {
            return Err(OptimError::InvalidHyperParams(format!("eta must be positive, got {eta}")));
        }
        if !(beta >= S::zero() && beta < S::one()) {
            return Err(OptimError::InvalidHyperParams(format!(
                "beta must lie in [0, 1), got {beta}"
            )));
        }
        if workers == 0 {
            return Err(OptimError::InvalidHyperParams("workers must be >= 1".into()));
        }
        Ok(Self {
            eta,
            beta,
            workers,
            lr_schedule,
        })
    }

    /// `η` times every schedule multiplier that has taken effect by iteration `t`.
    #[inline]
    pub fn effective_eta(&self, t: u64) -> S {
        self.eta * self.lr_schedule.factor(t)
    }
}

/// Effective learning rate at iteration `t`.
pub fn apply_lr_schedule<S: Scalar>(h: &HyperParams<S>, t: u64) -> S {
    h.effective_eta(t)
}

/// Momentum accumulator plus head-bucket index (the latter used by ordered
/// momentum only).
#[derive(Clone, Debug, PartialEq)]
pub struct MomentumState<S: Scalar> {
    pub u: Vec<S>,
    pub b: u64,
}

impl<S: Scalar> MomentumState<S> {
    pub fn new(dim: usize) -> Self {
        Self {
            u: vec![S::zero(); dim],
            b: 0,
        }
    }
}

/// A worker's delivery: a gradient (or, for local-momentum rules, the worker's
/// momentum) tagged with the parameter iteration it was computed on.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientMsg<S: Scalar> {
    pub grad: Vec<S>,
    pub ite: u64,
    pub worker: usize,
}

impl<S: Scalar> GradientMsg<S> {
    pub(crate) fn check(&self, dim: usize) -> Result<(), OptimError> {
        if self.grad.len() != dim {
            return Err(OptimError::DimensionMismatch {
                got: self.grad.len(),
                expected: dim,
            });
        }
        if !vector::is_finite(&self.grad) {
            return Err(OptimError::NonFiniteGradient {
                worker: self.worker,
                ite: self.ite,
            });
        }
        Ok(())
    }
}

/// Update rule selectable by name.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Asgd,
    NaiveAsgdm,
    Shifted,
    Ssgd,
    SsgdmGlobal,
    SsgdmLocal,
    Ormo,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 7] = [
        Self::Asgd,
        Self::NaiveAsgdm,
        Self::Shifted,
        Self::Ssgd,
        Self::SsgdmGlobal,
        Self::SsgdmLocal,
        Self::Ormo,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Asgd => "asgd",
            Self::NaiveAsgdm => "naive_asgdm",
            Self::Shifted => "shifted",
            Self::Ssgd => "ssgd",
            Self::SsgdmGlobal => "ssgdm_global",
            Self::SsgdmLocal => "ssgdm_local",
            Self::Ormo => "ormo",
        }
    }

    /// Scheduler used when none is configured.
    pub fn default_scheduler(self) -> Scheduler {
        match self {
            Self::Ssgd | Self::SsgdmGlobal | Self::SsgdmLocal => Scheduler::Synchronous,
            _ => Scheduler::Asynchronous,
        }
    }

    /// The synchronous-momentum rules assume a barrier between rounds.
    pub fn supports(self, scheduler: Scheduler) -> bool {
        !matches!(
            (self, scheduler),
            (Self::SsgdmGlobal | Self::SsgdmLocal, Scheduler::Asynchronous)
        )
    }

    /// Workers ship their local momentum instead of the raw gradient.
    pub fn uses_local_momentum(self) -> bool {
        matches!(self, Self::Shifted | Self::SsgdmLocal)
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OptimizerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                format!(
                    "unknown optimizer `{s}` (expected asgd | naive_asgdm | shifted | ssgd | \
                     ssgdm_global | ssgdm_local | ormo)"
                )
            })
    }
}

/// A named update rule together with its server (and simulated worker) state.
#[derive(Clone, Debug)]
pub struct Optimizer<S: Scalar> {
    kind: OptimizerKind,
    hp: HyperParams<S>,
    momentum: MomentumState<S>,
    local: Vec<Vec<S>>,
}

impl<S: Scalar> Optimizer<S> {
    pub fn new(kind: OptimizerKind, hp: HyperParams<S>, dim: usize) -> Self {
        let local = if kind.uses_local_momentum() {
            vec![vec![S::zero(); dim]; hp.workers]
        } else {
            Vec::new()
        };
        Self {
            kind,
            hp,
            momentum: MomentumState::new(dim),
            local,
        }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn hyper(&self) -> &HyperParams<S> {
        &self.hp
    }

    /// Server momentum for the rules that keep one.
    pub fn momentum(&self) -> Option<&MomentumState<S>> {
        match self.kind {
            OptimizerKind::Ormo | OptimizerKind::SsgdmGlobal | OptimizerKind::NaiveAsgdm => {
                Some(&self.momentum)
            }
            _ => None,
        }
    }

    pub fn head_bucket(&self) -> Option<u64> {
        (self.kind == OptimizerKind::Ormo).then_some(self.momentum.b)
    }

    /// Local momentum of `worker` for the local-momentum rules.
    pub fn local_momentum(&self, worker: usize) -> Option<&[S]> {
        self.local.get(worker).map(Vec::as_slice)
    }

    /// Turns a freshly computed gradient into the message the worker sends.
    ///
    /// `param_iter` is the iteration index of the parameter the gradient was
    /// computed on; it selects the learning rate for local-momentum rules.
    pub fn worker_payload(&mut self, worker: usize, grad: Vec<S>, param_iter: u64) -> GradientMsg<S> {
        let grad = if self.kind.uses_local_momentum() {
            let eta = self.hp.effective_eta(param_iter);
            let u = &mut self.local[worker];
            local_momentum_update(u, &grad, eta, self.hp.beta);
            u.clone()
        } else {
            grad
        };
        GradientMsg {
            grad,
            ite: param_iter,
            worker,
        }
    }

    /// Server iteration `t`. `waiting_empty` reports whether the waiting set was
    /// empty before this arrival.
    pub fn step(
        &mut self,
        w: &mut [S],
        msg: &GradientMsg<S>,
        t: u64,
        waiting_empty: bool,
    ) -> Result<(), OptimError> {
        match self.kind {
            OptimizerKind::Asgd | OptimizerKind::Ssgd => asgd_step(w, msg, &self.hp, t),
            OptimizerKind::NaiveAsgdm => naive_asgdm_step(w, &mut self.momentum.u, msg, &self.hp, t),
            OptimizerKind::Shifted | OptimizerKind::SsgdmLocal => local_momentum_apply(w, msg),
            OptimizerKind::SsgdmGlobal => {
                ssgdm_global_step(w, &mut self.momentum, msg, &self.hp, t, waiting_empty)
            }
            OptimizerKind::Ormo => {
                let advance =
                    ormo_should_advance(t, self.momentum.b, self.hp.workers, waiting_empty);
                ormo_step(w, &mut self.momentum, msg, &self.hp, t, advance)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for k in OptimizerKind::ALL {
            assert_eq!(k.as_str().parse::<OptimizerKind>().unwrap(), k);
        }
        assert!("smega2".parse::<OptimizerKind>().is_err());
    }

    #[test]
    fn hyper_param_validation() {
        let s = LrSchedule::<f64>::default;
        assert!(HyperParams::new(0.1, 1.0, 4, s()).is_err());
        assert!(HyperParams::new(0.1, -0.1, 4, s()).is_err());
        assert!(HyperParams::new(0.0, 0.5, 4, s()).is_err());
        assert!(HyperParams::new(0.1, 0.5, 0, s()).is_err());
        assert!(HyperParams::new(0.1, 0.0, 1, s()).is_ok());
    }

    #[test]
    fn schedule_scales_eta() {
        let h = HyperParams::<f64>::new(0.5, 0.9, 2, LrSchedule::new(vec![(10, 0.1)]).unwrap()).unwrap();
        assert_eq!(apply_lr_schedule(&h, 9), 0.5);
        assert!((apply_lr_schedule(&h, 10) - 0.05).abs() < 1e-17);
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let h = HyperParams::new(0.1, 0.9, 1, LrSchedule::default()).unwrap();
        let mut opt = Optimizer::new(OptimizerKind::Ormo, h, 2);
        let mut w = vec![0.0, 0.0];
        let msg = GradientMsg {
            grad: vec![f64::NAN, 0.0],
            ite: 0,
            worker: 0,
        };
        assert_eq!(
            opt.step(&mut w, &msg, 0, true),
            Err(OptimError::NonFiniteGradient { worker: 0, ite: 0 })
        );
    }

    #[test]
    fn shifted_with_zero_beta_matches_asgd() {
        let h = HyperParams::new(0.2, 0.0, 2, LrSchedule::default()).unwrap();
        let mut shifted = Optimizer::new(OptimizerKind::Shifted, h.clone(), 2);
        let mut plain = Optimizer::new(OptimizerKind::Asgd, h, 2);
        let mut a = vec![1.0, 2.0];
        let mut b = a.clone();
        for (t, (worker, g)) in [(0, vec![1.0, 0.0]), (1, vec![0.5, 0.5]), (0, vec![-1.0, 2.0])]
            .into_iter()
            .enumerate()
        {
            let m1 = shifted.worker_payload(worker, g.clone(), t as u64);
            let m2 = plain.worker_payload(worker, g, t as u64);
            shifted.step(&mut a, &m1, t as u64, true).unwrap();
            plain.step(&mut b, &m2, t as u64, true).unwrap();
        }
        assert_eq!(a, b);
    }

    #[test]
    fn scheduler_compatibility() {
        assert!(!OptimizerKind::SsgdmGlobal.supports(Scheduler::Asynchronous));
        assert!(OptimizerKind::Ormo.supports(Scheduler::Synchronous));
        assert_eq!(OptimizerKind::Ormo.default_scheduler(), Scheduler::Asynchronous);
        assert_eq!(OptimizerKind::Ssgd.default_scheduler(), Scheduler::Synchronous);
    }
}
