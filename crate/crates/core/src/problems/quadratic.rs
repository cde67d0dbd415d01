use super::{gaussian, problem_stream, GradientOracle, GradientSample, ProblemError, ProblemSpec};
use crate::vector;
use crate::Scalar;

/// `f(w; i) = ½ wᵀAw + z_iᵀw` with `Σ_i z_i = 0` and `(1/n) Σ_i ‖z_i‖² = σ²`.
///
/// `A = H diag(λ) H` with `H` a Householder reflection, so the spectrum is
/// exactly the linearly spaced `λ` and the minimiser is the origin.
#[derive(Clone, Debug)]
pub struct NoisyQuadratic<S: Scalar> {
    dim: usize,
    /// Row-major `d × d`.
    hessian: Vec<S>,
    eigenvalues: Vec<S>,
    /// Row-major `n × d`.
    noise: Vec<S>,
    samples: usize,
    weight_decay: S,
    initial: Vec<S>,
}

impl<S: Scalar> NoisyQuadratic<S> {
    pub fn generate(spec: &ProblemSpec) -> Self {
        let d = spec.dim;
        let n = spec.samples;
        let eigenvalues: Vec<f64> = if d == 1 {
            vec![spec.max_eig]
        } else {
            (0..d)
                .map(|i| spec.min_eig + (spec.max_eig - spec.min_eig) * i as f64 / (d - 1) as f64)
                .collect()
        };

        let mut rng = problem_stream(spec, 0);
        let mut v: Vec<f64> = (0..d).map(|_| gaussian::<f64>(&mut rng)).collect();
        let vn = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= vn);
        // H = I - 2vvᵀ, A = H Λ H
        let h = |i: usize, j: usize| (if i == j { 1.0 } else { 0.0 }) - 2.0 * v[i] * v[j];
        let mut hessian = vec![S::zero(); d * d];
        for i in 0..d {
            for j in i..d {
                let a: f64 = (0..d).map(|k| h(i, k) * eigenvalues[k] * h(k, j)).sum();
                hessian[i * d + j] = S::of(a);
                hessian[j * d + i] = S::of(a);
            }
        }

        let mut noise_rng = problem_stream(spec, 1);
        let mut noise: Vec<f64> = (0..n * d).map(|_| gaussian::<f64>(&mut noise_rng)).collect();
        for j in 0..d {
            let mean = (0..n).map(|i| noise[i * d + j]).sum::<f64>() / n as f64;
            (0..n).for_each(|i| noise[i * d + j] -= mean);
        }
        let second_moment = noise.iter().map(|x| x * x).sum::<f64>() / n as f64;
        let factor = if second_moment > 0.0 {
            spec.noise / second_moment.sqrt()
        } else {
            0.0
        };
        noise.iter_mut().for_each(|x| *x *= factor);

        let mut init_rng = problem_stream(spec, 2);
        let initial = (0..d).map(|_| gaussian::<S>(&mut init_rng)).collect();

        Self {
            dim: d,
            hessian,
            eigenvalues: eigenvalues.into_iter().map(S::of).collect(),
            noise: noise.into_iter().map(S::of).collect(),
            samples: n,
            weight_decay: S::of(spec.weight_decay),
            initial,
        }
    }

    pub fn hessian(&self) -> &[S] {
        &self.hessian
    }

    pub fn eigenvalues(&self) -> &[S] {
        &self.eigenvalues
    }

    pub fn noise_row(&self, i: usize) -> &[S] {
        &self.noise[i * self.dim..(i + 1) * self.dim]
    }

    fn hessian_times(&self, w: &[S]) -> Vec<S> {
        self.hessian
            .chunks_exact(self.dim)
            .map(|row| vector::dot(row, w))
            .collect()
    }

    pub(super) fn dataset_rows(&self) -> (Vec<String>, Vec<Vec<S>>) {
        let header = (0..self.dim).map(|j| format!("z{j}")).collect();
        let rows = (0..self.samples).map(|i| self.noise_row(i).to_vec()).collect();
        (header, rows)
    }
}

impl<S: Scalar> GradientOracle<S> for NoisyQuadratic<S> {
    fn param_dim(&self) -> usize {
        self.dim
    }

    fn num_samples(&self) -> usize {
        self.samples
    }

    fn weight_decay(&self) -> S {
        self.weight_decay
    }

    fn raw_sample_loss(&self, w: &[S], index: usize) -> S {
        S::of(0.5) * vector::dot(w, &self.hessian_times(w)) + vector::dot(self.noise_row(index), w)
    }

    fn add_raw_sample_grad(&self, w: &[S], index: usize, out: &mut [S]) {
        let aw = self.hessian_times(w);
        for ((o, a), z) in out.iter_mut().zip(aw).zip(self.noise_row(index)) {
            *o += a + *z;
        }
    }

    fn initial_point(&self) -> Vec<S> {
        self.initial.clone()
    }

    fn smoothness(&self) -> S {
        self.eigenvalues.iter().copied().fold(S::zero(), S::max) + self.weight_decay
    }

    fn stochastic_grad(&self, w: &[S], sample: &GradientSample) -> Result<Vec<S>, ProblemError> {
        self.check_param(w)?;
        if sample.indices.is_empty() {
            return Err(ProblemError::InvalidSpec("empty mini-batch".into()));
        }
        let mut mean_noise = vec![S::zero(); self.dim];
        for &i in &sample.indices {
            self.check_index(i)?;
            vector::axpy(S::one(), self.noise_row(i), &mut mean_noise);
        }
        vector::scale(S::one() / S::of_usize(sample.indices.len()), &mut mean_noise);
        let mut g = self.hessian_times(w);
        vector::axpy(S::one(), &mean_noise, &mut g);
        vector::axpy(self.weight_decay, w, &mut g);
        Ok(g)
    }

    fn full_gradient(&self, w: &[S]) -> Vec<S> {
        let mut mean_noise = vec![S::zero(); self.dim];
        for i in 0..self.samples {
            vector::axpy(S::one(), self.noise_row(i), &mut mean_noise);
        }
        vector::scale(S::one() / S::of_usize(self.samples), &mut mean_noise);
        let mut g = self.hessian_times(w);
        vector::axpy(S::one(), &mean_noise, &mut g);
        vector::axpy(self.weight_decay, w, &mut g);
        g
    }

    fn loss(&self, w: &[S]) -> S {
        let mut mean_noise = vec![S::zero(); self.dim];
        for i in 0..self.samples {
            vector::axpy(S::one(), self.noise_row(i), &mut mean_noise);
        }
        vector::scale(S::one() / S::of_usize(self.samples), &mut mean_noise);
        let half = S::of(0.5);
        half * vector::dot(w, &self.hessian_times(w))
            + vector::dot(&mean_noise, w)
            + half * self.weight_decay * vector::norm2(w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::ProblemKind;

    fn spec(noise: f64) -> ProblemSpec {
        let mut s = ProblemSpec::new(ProblemKind::NoisyQuadratic, 6, 40);
        s.noise = noise;
        s.seed = 5;
        s
    }

    #[test]
    fn zero_noise_gradient_vanishes_at_origin() {
        let q = NoisyQuadratic::<f64>::generate(&spec(0.0));
        let sample = GradientSample {
            worker: 0,
            request: 0,
            base_param_iter: 0,
            indices: vec![0, 3, 7],
        };
        let g = q.stochastic_grad(&[0.0; 6], &sample).unwrap();
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn full_gradient_is_hessian_times_w() {
        let q = NoisyQuadratic::<f64>::generate(&spec(2.0));
        let w = [0.3, -1.0, 2.0, 0.0, 0.5, -0.25];
        let g = q.full_gradient(&w);
        let a = q.hessian();
        for i in 0..6 {
            let aw: f64 = (0..6).map(|j| a[i * 6 + j] * w[j]).sum();
            assert!((g[i] - aw).abs() < 1e-12, "{i}: {} vs {aw}", g[i]);
        }
    }

    #[test]
    fn noise_has_exact_second_moment_and_zero_mean() {
        let q = NoisyQuadratic::<f64>::generate(&spec(1.5));
        let n = 40;
        let m2: f64 = (0..n).map(|i| vector::norm2(q.noise_row(i))).sum::<f64>() / n as f64;
        assert!((m2 - 1.5 * 1.5).abs() < 1e-12);
        for j in 0..6 {
            let mean: f64 = (0..n).map(|i| q.noise_row(i)[j]).sum::<f64>() / n as f64;
            assert!(mean.abs() < 1e-14);
        }
    }

    #[test]
    fn hessian_is_symmetric_with_prescribed_spectrum() {
        let q = NoisyQuadratic::<f64>::generate(&spec(1.0));
        let a = q.hessian();
        for i in 0..6 {
            for j in 0..6 {
                assert_eq!(a[i * 6 + j], a[j * 6 + i]);
            }
        }
        // trace equals the eigenvalue sum
        let tr: f64 = (0..6).map(|i| a[i * 6 + i]).sum();
        let sum: f64 = q.eigenvalues().iter().sum();
        assert!((tr - sum).abs() < 1e-12);
        assert_eq!(q.smoothness(), 1.0);
    }
}
