use super::{estimate_smoothness, gaussian, problem_stream, GradientOracle, ProblemSpec};
use crate::vector;
use crate::Scalar;

/// One-hidden-layer tanh regressor with squared loss,
/// `f(w; i) = ½ (vᵀ tanh(W x_i) − y_i)²`.
///
/// Parameters are packed as `[W (hidden × dim, row-major), v (hidden)]`.
/// Targets come from a random teacher network plus Gaussian noise.
#[derive(Clone, Debug)]
pub struct TwoLayerNet<S: Scalar> {
    input_dim: usize,
    hidden: usize,
    inputs: Vec<S>,
    targets: Vec<S>,
    weight_decay: S,
    initial: Vec<S>,
    smoothness: S,
}

impl<S: Scalar> TwoLayerNet<S> {
    pub fn generate(spec: &ProblemSpec) -> Self {
        let p = spec.dim;
        let h = spec.hidden;
        let n = spec.samples;
        let in_scale = 1.0 / (p as f64).sqrt();
        let out_scale = 1.0 / (h as f64).sqrt();

        let mut teacher_rng = problem_stream(spec, 0);
        let teacher: Vec<S> = (0..h * (p + 1))
            .map(|j| {
                let s = if j < h * p { in_scale } else { out_scale };
                S::of(s) * gaussian::<S>(&mut teacher_rng)
            })
            .collect();

        let mut data_rng = problem_stream(spec, 1);
        let inputs: Vec<S> = (0..n * p).map(|_| gaussian::<S>(&mut data_rng)).collect();

        let mut init_rng = problem_stream(spec, 2);
        let initial: Vec<S> = (0..h * (p + 1))
            .map(|j| {
                let s = if j < h * p { in_scale } else { out_scale };
                S::of(s) * gaussian::<S>(&mut init_rng)
            })
            .collect();

        let mut net = Self {
            input_dim: p,
            hidden: h,
            inputs,
            targets: vec![S::zero(); n],
            weight_decay: S::of(spec.weight_decay),
            initial,
            smoothness: S::zero(),
        };
        let mut noise_rng = problem_stream(spec, 3);
        for i in 0..n {
            let clean = net.forward(&teacher, i).0;
            net.targets[i] = clean + S::of(0.1) * gaussian::<S>(&mut noise_rng);
        }
        let init = net.initial.clone();
        net.smoothness = estimate_smoothness(&net, &init, 50, 1e-4);
        net
    }

    fn input(&self, i: usize) -> &[S] {
        &self.inputs[i * self.input_dim..(i + 1) * self.input_dim]
    }

    /// Output and hidden activations.
    fn forward(&self, w: &[S], i: usize) -> (S, Vec<S>) {
        let (first, second) = w.split_at(self.hidden * self.input_dim);
        let x = self.input(i);
        let act: Vec<S> = first
            .chunks_exact(self.input_dim)
            .map(|row| vector::dot(row, x).tanh())
            .collect();
        (vector::dot(second, &act), act)
    }

    pub(super) fn dataset_rows(&self) -> (Vec<String>, Vec<Vec<S>>) {
        let mut header: Vec<String> = (0..self.input_dim).map(|j| format!("x{j}")).collect();
        header.push("y".into());
        let rows = (0..self.targets.len())
            .map(|i| {
                let mut r = self.input(i).to_vec();
                r.push(self.targets[i]);
                r
            })
            .collect();
        (header, rows)
    }
}

impl<S: Scalar> GradientOracle<S> for TwoLayerNet<S> {
    fn param_dim(&self) -> usize {
        self.hidden * (self.input_dim + 1)
    }

    fn num_samples(&self) -> usize {
        self.targets.len()
    }

    fn weight_decay(&self) -> S {
        self.weight_decay
    }

    fn raw_sample_loss(&self, w: &[S], index: usize) -> S {
        let r = self.forward(w, index).0 - self.targets[index];
        S::of(0.5) * r * r
    }

    fn add_raw_sample_grad(&self, w: &[S], index: usize, out: &mut [S]) {
        let (out_val, act) = self.forward(w, index);
        let r = out_val - self.targets[index];
        let split = self.hidden * self.input_dim;
        let v = &w[split..];
        let x = self.input(index);
        let (gw, gv) = out.split_at_mut(split);
        for (j, row) in gw.chunks_exact_mut(self.input_dim).enumerate() {
            let delta = r * v[j] * (S::one() - act[j] * act[j]);
            vector::axpy(delta, x, row);
        }
        vector::axpy(r, &act, gv);
    }

    fn initial_point(&self) -> Vec<S> {
        self.initial.clone()
    }

    /// Finite-difference power-iteration estimate at the initial point.
    fn smoothness(&self) -> S {
        self.smoothness
    }
}
