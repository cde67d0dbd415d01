//! Ordered momentum.
//!
//! Gradients are grouped into buckets by the iteration index of the parameter
//! they were computed on: bucket 0 holds the `K` gradients of the initial
//! parameter and bucket `i ≥ 1` holds indices `(i−1)K+1 ..= iK`. The momentum
//! weights bucket `i` by `β^{b−i}` where `b` is the head bucket, so a late
//! gradient is dropped into its own bucket rather than the head. The parameter
//! receives the compensated coefficient `η (1−β^{Δ+1})/(1−β)`, the total step a
//! gradient would already have contributed had it arrived in order.

use super::{GradientMsg, HyperParams, MomentumState, OptimError};
use crate::vector;
use crate::Scalar;

/// Bucket of a gradient computed on parameter iteration `j`: `⌈j/K⌉`.
#[inline]
pub fn bucket_index(j: u64, workers: usize) -> u64 {
    debug_assert!(workers >= 1);
    j.div_ceil(workers as u64)
}

/// `β^Δ` with `0⁰ = 1`.
#[inline]
pub fn momentum_weight<S: Scalar>(beta: S, delta: u64) -> S {
    if delta == 0 {
        return S::one();
    }
    if beta == S::zero() {
        return S::zero();
    }
    match i32::try_from(delta) {
        Ok(d) => beta.powi(d),
        Err(_) => S::zero(),
    }
}

/// `(1−β^{Δ+1})/(1−β) = Σ_{j=0}^{Δ} β^j`, in closed form.
///
/// Exactly `1` when `Δ = 0` or `β = 0`. The numerator goes through `expm1`
/// so the value keeps full relative precision when `β` is close to one.
#[inline]
pub fn compensation_coefficient<S: Scalar>(beta: S, delta: u64) -> S {
    if delta == 0 || beta == S::zero() {
        return S::one();
    }
    let exponent = S::of(delta as f64 + 1.0);
    -(exponent * beta.ln()).exp_m1() / (S::one() - beta)
}

/// Head-bucket advance: `w ← w − βu`, `u ← βu`, `b ← b+1`.
pub fn advance_head<S: Scalar>(w: &mut [S], m: &mut MomentumState<S>, beta: S) {
    vector::sub_scaled(beta, &m.u, w);
    vector::scale(beta, &mut m.u);
    m.b += 1;
}

/// One server iteration of ordered momentum.
///
/// `head_advance` must be true exactly when the waiting set was empty at the
/// top of iteration `t` and `⌈t/K⌉ > b_t`; see [`ormo_should_advance`].
pub fn ormo_step<S: Scalar>(
    w: &mut [S],
    m: &mut MomentumState<S>,
    msg: &GradientMsg<S>,
    h: &HyperParams<S>,
    t: u64,
    head_advance: bool,
) -> Result<(), OptimError> {
    msg.check(w.len())?;
    let bucket = bucket_index(msg.ite, h.workers);
    let head = m.b + u64::from(head_advance);
    if bucket > head {
        return Err(OptimError::OrderingViolation {
            t,
            ite: msg.ite,
            bucket,
            head,
        });
    }
    if head_advance {
        advance_head(w, m, h.beta);
    }
    let delta = head - bucket;
    let eta = h.effective_eta(t);
    vector::axpy(eta * momentum_weight(h.beta, delta), &msg.grad, &mut m.u);
    vector::sub_scaled(eta * compensation_coefficient(h.beta, delta), &msg.grad, w);
    Ok(())
}

/// Head-advance rule evaluated at the top of iteration `t`.
#[inline]
pub fn ormo_should_advance(t: u64, head: u64, workers: usize, waiting_empty: bool) -> bool {
    waiting_empty && bucket_index(t, workers) > head
}
