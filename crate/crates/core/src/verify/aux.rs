//! Analysis sequences `û`, `ŵ`, `ŷ`.
//!
//! They consume gradients in parameter-iteration order (slot `t ≥ 1` is the
//! gradient computed on parameter `t`; slot 0 is the whole first bucket), which
//! is generally not the order in which the server receives them.

use std::collections::VecDeque;

use thiserror::Error;

use crate::vector;
use crate::Scalar;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AuxError {
    #[error("gradient for slot {got} fed while slot {expected} is due")]
    OutOfOrder { expected: u64, got: u64 },
    #[error("initial bucket needs {expected} gradients, got {got}")]
    InitialBucket { expected: usize, got: usize },
}

/// `(û_t, ŵ_t, ŷ_t)` plus the last `K + 1` values of `ŵ`.
#[derive(Clone, Debug)]
pub struct AuxState<S: Scalar> {
    pub u_hat: Vec<S>,
    pub w_hat: Vec<S>,
    pub y_hat: Vec<S>,
    /// `(index, ŵ_index)`, oldest first.
    pub w_hat_history: VecDeque<(u64, Vec<S>)>,
    /// Current index `t` (the state is `(û_t, ŵ_t, ŷ_t)`).
    pub t: u64,
    eta: S,
    beta: S,
    workers: usize,
}

impl<S: Scalar> AuxState<S> {
    /// `û₁ = η Σ_k g₀ᵏ`, `ŵ₁ = w₀ − η Σ_k g₀ᵏ`, `ŷ₁ = (ŵ₁ − β w₀)/(1 − β)`.
    pub fn init(w0: &[S], first_bucket: &[Vec<S>], eta: S, beta: S, workers: usize) -> Result<Self, AuxError> {
        if first_bucket.len() != workers {
            return Err(AuxError::InitialBucket {
                expected: workers,
                got: first_bucket.len(),
            });
        }
        let d = w0.len();
        let mut sum = vec![S::zero(); d];
        for g in first_bucket {
            vector::axpy(S::one(), g, &mut sum);
        }
        let mut u_hat = sum.clone();
        vector::scale(eta, &mut u_hat);
        let mut w_hat = w0.to_vec();
        vector::sub_scaled(eta, &sum, &mut w_hat);
        let inv = S::one() / (S::one() - beta);
        let y_hat = w_hat
            .iter()
            .zip(w0)
            .map(|(&a, &b)| (a - beta * b) * inv)
            .collect();
        let mut w_hat_history = VecDeque::with_capacity(workers + 1);
        w_hat_history.push_back((1, w_hat.clone()));
        Ok(Self {
            u_hat,
            w_hat,
            y_hat,
            w_hat_history,
            t: 1,
            eta,
            beta,
            workers,
        })
    }

    /// `ŵ_j` if still in the history window.
    pub fn w_hat_at(&self, j: u64) -> Option<&[S]> {
        self.w_hat_history
            .iter()
            .find(|(i, _)| *i == j)
            .map(|(_, v)| v.as_slice())
    }
}

/// Consumes the gradient of slot `t` (= the current index) and moves to `t + 1`.
///
/// When `K | (t − 1)` the momentum is decayed first: `û ← βû + ηg`,
/// `ŵ ← ŵ − βû_old − ηg`; otherwise `û ← û + ηg`, `ŵ ← ŵ − ηg`. Always
/// `ŷ ← ŷ − η/(1−β) g`.
pub fn advance_aux<S: Scalar>(aux: &mut AuxState<S>, t: u64, grad: &[S]) -> Result<(), AuxError> {
    if t != aux.t {
        return Err(AuxError::OutOfOrder {
            expected: aux.t,
            got: t,
        });
    }
    let (eta, beta) = (aux.eta, aux.beta);
    if (t - 1) % aux.workers as u64 == 0 {
        vector::sub_scaled(beta, &aux.u_hat, &mut aux.w_hat);
        vector::scale(beta, &mut aux.u_hat);
    }
    vector::axpy(eta, grad, &mut aux.u_hat);
    vector::sub_scaled(eta, grad, &mut aux.w_hat);
    vector::sub_scaled(eta / (S::one() - beta), grad, &mut aux.y_hat);
    aux.t += 1;
    if aux.w_hat_history.len() == aux.workers + 1 {
        aux.w_hat_history.pop_front();
    }
    aux.w_hat_history.push_back((aux.t, aux.w_hat.clone()));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn out_of_order_feed_is_rejected() {
        let mut aux = AuxState::init(&[0.0], &[vec![1.0], vec![1.0]], 0.1, 0.5, 2).unwrap();
        assert_eq!(
            advance_aux(&mut aux, 2, &[1.0]),
            Err(AuxError::OutOfOrder { expected: 1, got: 2 })
        );
        advance_aux(&mut aux, 1, &[1.0]).unwrap();
        assert_eq!(aux.t, 2);
    }

    #[test]
    fn first_bucket_size_is_checked() {
        assert!(AuxState::init(&[0.0], &[vec![1.0]], 0.1, 0.5, 2).is_err());
    }

    #[test]
    fn zero_beta_momentum_is_latest_bucket_sum() {
        let k = 3;
        let eta = 0.5;
        let first: Vec<Vec<f64>> = (0..k).map(|i| vec![i as f64]).collect();
        let mut aux = AuxState::init(&[0.0], &first, eta, 0.0, k).unwrap();
        let grads: Vec<f64> = (1..=7).map(|j| j as f64 * 1.5).collect();
        for (j, g) in grads.iter().enumerate() {
            let t = j as u64 + 1;
            advance_aux(&mut aux, t, &[*g]).unwrap();
            // slots 1..=t consumed; current bucket is ⌈t/K⌉ holding slots (b−1)K+1..=t
            let b = t.div_ceil(k as u64);
            let start = (b - 1) * k as u64 + 1;
            let expect: f64 = (start..=t).map(|s| eta * grads[s as usize - 1]).sum();
            assert!((aux.u_hat[0] - expect).abs() < 1e-12, "t={t}");
        }
    }

    #[test]
    fn single_worker_y_is_sgd_with_inflated_rate() {
        let (eta, beta) = (0.1_f64, 0.75);
        let w0 = [2.0];
        let g0 = vec![vec![1.0]];
        let mut aux = AuxState::init(&w0, &g0, eta, beta, 1).unwrap();
        let mut y = aux.y_hat[0];
        for (j, g) in [0.5, -1.0, 2.0, 0.25].into_iter().enumerate() {
            advance_aux(&mut aux, j as u64 + 1, &[g]).unwrap();
            y -= eta / (1.0 - beta) * g;
            assert!((aux.y_hat[0] - y).abs() < 1e-14);
        }
    }

    #[test]
    fn lemma3_identity_hand_unroll_two_workers() {
        // K = 2: first applicable index is t = 3.
        let (eta, beta) = (0.2_f64, 0.5);
        let w0 = [1.0];
        let mut aux = AuxState::init(&w0, &[vec![1.0], vec![3.0]], eta, beta, 2).unwrap();
        // û1 = 0.8, ŵ1 = 0.2, ŷ1 = (0.2 − 0.5)/0.5 = −0.6
        assert!((aux.u_hat[0] - 0.8).abs() < 1e-15);
        assert!((aux.w_hat[0] - 0.2).abs() < 1e-15);
        assert!((aux.y_hat[0] + 0.6).abs() < 1e-15);
        advance_aux(&mut aux, 1, &[2.0]).unwrap(); // K | 0: decay
        // ŵ2 = 0.2 − 0.4 − 0.4 = −0.6; û2 = 0.4 + 0.4 = 0.8; ŷ2 = −0.6 − 0.8 = −1.4
        advance_aux(&mut aux, 2, &[-1.0]).unwrap();
        // ŵ3 = −0.6 + 0.2 = −0.4; ŷ3 = −1.4 + 0.4 = −1.0
        assert!((aux.w_hat[0] + 0.4).abs() < 1e-15);
        assert!((aux.y_hat[0] + 1.0).abs() < 1e-15);
        let w1 = aux.w_hat_at(1).unwrap()[0];
        let rhs = (aux.w_hat[0] - beta * w1) / (1.0 - beta);
        assert!((aux.y_hat[0] - rhs).abs() <= 1e-12);
    }
}
