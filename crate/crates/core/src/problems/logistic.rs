use rand::Rng;

use super::{gaussian, problem_stream, GradientOracle, ProblemSpec};
use crate::vector;
use crate::Scalar;

/// Binary logistic regression, `f(w; i) = log(1 + e^{x_iᵀw}) − y_i x_iᵀw`.
///
/// Features are drawn on the unit sphere; labels come from a random ground-truth
/// separator with each label flipped independently with probability `label_flip`.
#[derive(Clone, Debug)]
pub struct LogisticRegression<S: Scalar> {
    dim: usize,
    /// Row-major `n × d`.
    features: Vec<S>,
    labels: Vec<S>,
    weight_decay: S,
    smoothness: S,
}

impl<S: Scalar> LogisticRegression<S> {
    pub fn generate(spec: &ProblemSpec) -> Self {
        let d = spec.dim;
        let n = spec.samples;
        let mut truth_rng = problem_stream(spec, 0);
        let truth: Vec<f64> = (0..d).map(|_| gaussian::<f64>(&mut truth_rng)).collect();

        let mut rng = problem_stream(spec, 1);
        let mut features = Vec::with_capacity(n * d);
        let mut labels = Vec::with_capacity(n);
        let mut max_norm2 = 0.0_f64;
        for _ in 0..n {
            let mut x: Vec<f64> = (0..d).map(|_| gaussian::<f64>(&mut rng)).collect();
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                x.iter_mut().for_each(|v| *v /= norm);
            }
            let margin: f64 = x.iter().zip(&truth).map(|(a, b)| a * b).sum();
            let mut y = if margin > 0.0 { 1.0 } else { 0.0 };
            if rng.random::<f64>() < spec.label_flip {
                y = 1.0 - y;
            }
            let xs: Vec<S> = x.into_iter().map(S::of).collect();
            max_norm2 = max_norm2.max(vector::norm2(&xs).to_f64_lossy());
            features.extend(xs);
            labels.push(S::of(y));
        }
        Self {
            dim: d,
            features,
            labels,
            weight_decay: S::of(spec.weight_decay),
            smoothness: S::of(max_norm2 / 4.0 + spec.weight_decay),
        }
    }

    pub fn feature(&self, i: usize) -> &[S] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> S {
        self.labels[i]
    }

    /// Builds a problem from explicit data rows.
    pub fn from_data(features: Vec<Vec<S>>, labels: Vec<S>, weight_decay: S) -> Self {
        let dim = features.first().map_or(0, Vec::len);
        let max_norm2 = features
            .iter()
            .map(|x| vector::norm2(x))
            .fold(S::zero(), S::max);
        Self {
            dim,
            features: features.into_iter().flatten().collect(),
            labels,
            weight_decay,
            smoothness: max_norm2 / S::of(4.0) + weight_decay,
        }
    }

    pub(super) fn dataset_rows(&self) -> (Vec<String>, Vec<Vec<S>>) {
        let mut header: Vec<String> = (0..self.dim).map(|j| format!("x{j}")).collect();
        header.push("y".into());
        let rows = (0..self.labels.len())
            .map(|i| {
                let mut r = self.feature(i).to_vec();
                r.push(self.labels[i]);
                r
            })
            .collect();
        (header, rows)
    }
}

fn sigmoid<S: Scalar>(z: S) -> S {
    if z >= S::zero() {
        S::one() / (S::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (S::one() + e)
    }
}

fn softplus<S: Scalar>(z: S) -> S {
    z.max(S::zero()) + (-z.abs()).exp().ln_1p()
}

impl<S: Scalar> GradientOracle<S> for LogisticRegression<S> {
    fn param_dim(&self) -> usize {
        self.dim
    }

    fn num_samples(&self) -> usize {
        self.labels.len()
    }

    fn weight_decay(&self) -> S {
        self.weight_decay
    }

    fn raw_sample_loss(&self, w: &[S], index: usize) -> S {
        let z = vector::dot(self.feature(index), w);
        softplus(z) - self.labels[index] * z
    }

    fn add_raw_sample_grad(&self, w: &[S], index: usize, out: &mut [S]) {
        let x = self.feature(index);
        let r = sigmoid(vector::dot(x, w)) - self.labels[index];
        vector::axpy(r, x, out);
    }

    fn initial_point(&self) -> Vec<S> {
        vec![S::zero(); self.dim]
    }

    /// `max_i ‖x_i‖² / 4 + λ`.
    fn smoothness(&self) -> S {
        self.smoothness
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{GradientSample, ProblemKind};

    #[test]
    fn single_instance_gradient_at_origin() {
        let p = LogisticRegression::from_data(vec![vec![1.0_f64, 0.0]], vec![1.0], 0.0);
        let s = GradientSample {
            worker: 0,
            request: 0,
            base_param_iter: 0,
            indices: vec![0],
        };
        assert_eq!(p.stochastic_grad(&[0.0, 0.0], &s).unwrap(), vec![-0.5, 0.0]);
        assert!((p.loss(&[0.0, 0.0]) - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn generated_features_are_unit_norm() {
        let mut spec = ProblemSpec::new(ProblemKind::LogisticRegression, 5, 200);
        spec.seed = 11;
        let p = LogisticRegression::<f64>::generate(&spec);
        for i in 0..200 {
            assert!((vector::norm(p.feature(i)) - 1.0).abs() < 1e-12);
            assert!(p.label(i) == 0.0 || p.label(i) == 1.0);
        }
        assert!(p.smoothness() <= 0.25 + 1e-12);
    }

    #[test]
    fn sigmoid_and_softplus_are_stable_at_extremes() {
        assert_eq!(sigmoid(800.0_f64), 1.0);
        assert_eq!(sigmoid(-800.0_f64), 0.0);
        assert!((softplus(800.0_f64) - 800.0).abs() < 1e-12);
        assert!(softplus(-800.0_f64) >= 0.0);
    }
}
