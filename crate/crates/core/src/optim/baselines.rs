//! Reference update rules compared against ordered momentum.

use super::{GradientMsg, HyperParams, MomentumState, OptimError};
use crate::vector;
use crate::Scalar;

/// `w ← w − η g`
pub fn asgd_step<S: Scalar>(
    w: &mut [S],
    msg: &GradientMsg<S>,
    h: &HyperParams<S>,
    t: u64,
) -> Result<(), OptimError> {
    msg.check(w.len())?;
    vector::sub_scaled(h.effective_eta(t), &msg.grad, w);
    Ok(())
}

/// Naive server momentum: `u ← βu + ηg`, `w ← w − u`.
pub fn naive_asgdm_step<S: Scalar>(
    w: &mut [S],
    u: &mut [S],
    msg: &GradientMsg<S>,
    h: &HyperParams<S>,
    t: u64,
) -> Result<(), OptimError> {
    msg.check(w.len())?;
    vector::scale(h.beta, u);
    vector::axpy(h.effective_eta(t), &msg.grad, u);
    vector::sub_scaled(S::one(), u, w);
    Ok(())
}

/// Worker half of local (shifted) momentum: `u_local ← β u_local + η g`.
pub fn local_momentum_update<S: Scalar>(u_local: &mut [S], grad: &[S], eta: S, beta: S) {
    vector::scale(beta, u_local);
    vector::axpy(eta, grad, u_local);
}

/// Server half of local (shifted) momentum: `w ← w − u_local`.
pub fn local_momentum_apply<S: Scalar>(w: &mut [S], payload: &GradientMsg<S>) -> Result<(), OptimError> {
    payload.check(w.len())?;
    vector::sub_scaled(S::one(), &payload.grad, w);
    Ok(())
}

/// Global-momentum synchronous SGD, one split step.
///
/// `barrier_reset` is true when the waiting set is empty, i.e. at the first
/// arrival of a new round: `w ← w − βu`, `u ← βu`. Then `w ← w − ηg`, `u ← u + ηg`.
pub fn ssgdm_global_step<S: Scalar>(
    w: &mut [S],
    m: &mut MomentumState<S>,
    msg: &GradientMsg<S>,
    h: &HyperParams<S>,
    t: u64,
    barrier_reset: bool,
) -> Result<(), OptimError> {
    msg.check(w.len())?;
    if barrier_reset {
        vector::sub_scaled(h.beta, &m.u, w);
        vector::scale(h.beta, &mut m.u);
    }
    let eta = h.effective_eta(t);
    vector::sub_scaled(eta, &msg.grad, w);
    vector::axpy(eta, &msg.grad, &mut m.u);
    Ok(())
}

/// Mini-batch SGD with heavy-ball momentum over `K` gradients:
/// `w̃ ← w̃ − βũ − (η̃/K) Σ g_k`, `ũ ← βũ + (η̃/K) Σ g_k`.
pub fn minibatch_sgdm_reference<S: Scalar>(
    w: &mut [S],
    u: &mut [S],
    batch_grads: &[Vec<S>],
    eta_tilde: S,
    beta: S,
) {
    let k = S::of_usize(batch_grads.len());
    let mut step = vec![S::zero(); w.len()];
    for g in batch_grads {
        vector::axpy(S::one(), g, &mut step);
    }
    vector::scale(eta_tilde / k, &mut step);
    vector::sub_scaled(beta, u, w);
    vector::sub_scaled(S::one(), &step, w);
    vector::scale(beta, u);
    vector::axpy(S::one(), &step, u);
}
