use serde::{Deserialize, Serialize};

use super::OptimError;
use crate::Scalar;

/// Step learning-rate decay: `(iteration, multiplier)` pairs with strictly
/// increasing iterations.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule<S: Scalar> {
    steps: Vec<(u64, S)>,
}

impl<S: Scalar> LrSchedule<S> {
    pub fn new(steps: Vec<(u64, S)>) -> Result<Self, OptimError> {
        if steps.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(OptimError::InvalidHyperParams(
                "learning-rate schedule iterations must be strictly increasing".into(),
            ));
        }
        if steps.iter().any(|(_, m)| !(m.is_finite() && *m > S::zero())) {
            return Err(OptimError::InvalidHyperParams(
                "learning-rate multipliers must be finite and positive".into(),
            ));
        }
        Ok(Self { steps })
    }

    pub fn steps(&self) -> &[(u64, S)] {
        &self.steps
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Product of every multiplier whose iteration is `<= t`.
    pub fn factor(&self, t: u64) -> S {
        self.steps
            .iter()
            .take_while(|(it, _)| *it <= t)
            .fold(S::one(), |acc, (_, m)| acc * *m)
    }
}
