use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ormo::problems::{
    assumption_constants, estimate_smoothness, GradientOracle, GradientSample, LogisticRegression, NoisyQuadratic,
    Problem, ProblemKind, ProblemSpec,
};
use ormo::rng::StreamFactory;
use ormo::vector;

fn spec(kind: ProblemKind, dim: usize, samples: usize) -> ProblemSpec {
    let mut s = ProblemSpec::new(kind, dim, samples);
    s.seed = 21;
    s.hidden = 6;
    s
}

fn all_problems() -> Vec<(ProblemKind, Problem<f64>)> {
    let mut out = Vec::new();
    for kind in [ProblemKind::NoisyQuadratic, ProblemKind::LogisticRegression, ProblemKind::TwoLayerNet] {
        let mut s = spec(kind, 8, 64);
        s.weight_decay = 1e-3;
        out.push((kind, Problem::build(&s).unwrap()));
    }
    out
}

fn single(i: usize) -> GradientSample {
    GradientSample {
        worker: 0,
        request: 0,
        base_param_iter: 0,
        indices: vec![i],
    }
}

fn random_point(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()
}

#[test]
fn analytic_gradients_match_central_differences() {
    let h = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (kind, p) in all_problems() {
        let d = p.param_dim();
        let mut worst = 0.0_f64;
        for _ in 0..20 {
            let w = random_point(&mut rng, d);
            let i = rng.random_range(0..p.num_samples());
            let g = p.stochastic_grad(&w, &single(i)).unwrap();
            let fd: Vec<f64> = (0..d)
                .map(|j| {
                    let mut a = w.clone();
                    let mut b = w.clone();
                    a[j] += h;
                    b[j] -= h;
                    (p.sample_loss(&a, i).unwrap() - p.sample_loss(&b, i).unwrap()) / (2.0 * h)
                })
                .collect();
            let gn = vector::norm(&g);
            assert!(gn > 0.0);
            worst = worst.max(vector::norm(&vector::sub(&fd, &g)) / gn);
        }
        assert!(worst <= 1e-6, "{kind}: relative FD error {worst:e}");
    }
}

#[test]
fn full_gradient_matches_central_differences_of_loss() {
    let h = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for (kind, p) in all_problems() {
        let d = p.param_dim();
        let w = random_point(&mut rng, d);
        let g = p.full_gradient(&w);
        let fd: Vec<f64> = (0..d)
            .map(|j| {
                let mut a = w.clone();
                let mut b = w.clone();
                a[j] += h;
                b[j] -= h;
                (p.loss(&a) - p.loss(&b)) / (2.0 * h)
            })
            .collect();
        let rel = vector::norm(&vector::sub(&fd, &g)) / vector::norm(&g);
        assert!(rel <= 1e-6, "{kind}: {rel:e}");
    }
}

#[test]
fn mean_of_singleton_gradients_is_full_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for (kind, p) in all_problems() {
        let w = random_point(&mut rng, p.param_dim());
        let n = p.num_samples();
        let mut mean = vec![0.0; w.len()];
        for i in 0..n {
            vector::axpy(1.0 / n as f64, &p.stochastic_grad(&w, &single(i)).unwrap(), &mut mean);
        }
        let full = p.full_gradient(&w);
        let rel = vector::relative_residual(&vector::sub(&mean, &full), &full);
        assert!(rel <= 1e-12, "{kind}: {rel:e}");
        // the whole dataset as one batch
        let batch = GradientSample {
            worker: 0,
            request: 0,
            base_param_iter: 0,
            indices: (0..n).collect(),
        };
        let g = p.stochastic_grad(&w, &batch).unwrap();
        assert!(vector::relative_residual(&vector::sub(&g, &full), &full) <= 1e-12);
    }
}

#[test]
fn sampled_gradients_are_unbiased() {
    let m = 10_000u64;
    let streams = StreamFactory::new(3);
    for (kind, p) in all_problems() {
        let w = p.initial_point();
        let full = p.full_gradient(&w);
        let mut mean = vec![0.0; w.len()];
        let mut observed = Vec::new();
        for r in 0..m {
            let s = GradientSample::draw(&streams, 0, r, 0, p.num_samples(), 1);
            let g = p.stochastic_grad(&w, &s).unwrap();
            vector::axpy(1.0 / m as f64, &g, &mut mean);
            observed.push(g);
        }
        let c = assumption_constants(&p, observed.iter().map(|g| (w.as_slice(), g.as_slice())));
        let bound = 4.0 * c.sigma2_hat.sqrt() / (m as f64).sqrt();
        let err = vector::max_abs_diff(&mean, &full);
        assert!(err <= bound, "{kind}: {err:e} > {bound:e}");
        assert!(c.g2_hat >= c.full_g2_max);
    }
}

#[test]
fn stochastic_gradient_is_pure() {
    for (_, p) in all_problems() {
        let w = p.initial_point();
        let s = GradientSample::draw(&StreamFactory::new(9), 2, 5, 0, p.num_samples(), 7);
        let a = p.stochastic_grad(&w, &s).unwrap();
        let b = p.stochastic_grad(&w, &s).unwrap();
        assert_eq!(
            a.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
    }
}

#[test]
fn out_of_range_index_is_an_error() {
    for (_, p) in all_problems() {
        let w = p.initial_point();
        assert!(p.stochastic_grad(&w, &single(p.num_samples())).is_err());
        assert!(p.stochastic_grad(&w[1..], &single(0)).is_err());
    }
}

#[test]
fn quadratic_gradient_is_hessian_times_w_plus_noise() {
    let mut s = spec(ProblemKind::NoisyQuadratic, 6, 10);
    s.noise = 0.0;
    let q = NoisyQuadratic::<f64>::generate(&s);
    let a = q.hessian();
    let w: Vec<f64> = (0..6).map(|i| i as f64 - 2.5).collect();
    let aw: Vec<f64> = (0..6).map(|r| (0..6).map(|c| a[r * 6 + c] * w[c]).sum()).collect();
    let g = q.full_gradient(&w);
    assert!(vector::max_abs_diff(&g, &aw) <= 1e-12);
    // zero noise: the origin is the minimizer of every sample
    let zero = vec![0.0; 6];
    assert!(vector::norm(&q.stochastic_grad(&zero, &single(3)).unwrap()) == 0.0);
    // symmetric
    for r in 0..6 {
        for c in 0..6 {
            assert!((a[r * 6 + c] - a[c * 6 + r]).abs() <= 1e-15);
        }
    }
}

#[test]
fn smoothness_constants_bound_the_hessian() {
    // quadratic: L is the top eigenvalue exactly
    let q = Problem::<f64>::build(&spec(ProblemKind::NoisyQuadratic, 12, 50)).unwrap();
    let est = estimate_smoothness(&q, &q.initial_point(), 300, 1e-4);
    assert!((est - q.smoothness()).abs() <= 1e-4 * q.smoothness(), "{est} vs {}", q.smoothness());

    // logistic with unit-norm features and no decay: L <= 1/4
    let lr = Problem::<f64>::build(&spec(ProblemKind::LogisticRegression, 10, 200)).unwrap();
    assert!(lr.smoothness() <= 0.25 + 1e-12);
    for w in [vec![0.0; 10], lr.initial_point()] {
        let est = estimate_smoothness(&lr, &w, 200, 1e-4);
        assert!(est <= lr.smoothness() * (1.0 + 1e-4), "{est} > {}", lr.smoothness());
    }

    // net: estimated, positive and finite
    let net = Problem::<f64>::build(&spec(ProblemKind::TwoLayerNet, 5, 40)).unwrap();
    assert!(net.smoothness() > 0.0 && net.smoothness().is_finite());
}

#[test]
fn zero_noise_full_batch_has_no_variance() {
    let mut s = spec(ProblemKind::NoisyQuadratic, 5, 20);
    s.noise = 0.0;
    let q = Problem::<f64>::build(&s).unwrap();
    let w = q.initial_point();
    let g = q.full_gradient(&w);
    let c = assumption_constants(&q, [(w.as_slice(), g.as_slice())]);
    assert_eq!(c.sigma2_hat, 0.0);
}

#[test]
fn logistic_from_explicit_data() {
    let p = LogisticRegression::from_data(vec![vec![1.0, 0.0]], vec![1.0], 0.0);
    let g = p.stochastic_grad(&[0.0, 0.0], &single(0)).unwrap();
    assert_eq!(g, vec![-0.5, 0.0]);
}

#[test]
fn problems_work_in_single_precision() {
    let p = Problem::<f32>::build(&spec(ProblemKind::LogisticRegression, 8, 64)).unwrap();
    let w = p.initial_point();
    let g = p.full_gradient(&w);
    assert!(g.iter().all(|x| x.is_finite()));
}
