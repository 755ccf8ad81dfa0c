use manifold_lab::nncore::fd::{loss_gradient, network_jacobian, relative_error, DEFAULT_STEP};
use manifold_lab::nncore::{
    curvature_proxy, forward, jacobian, loss_grad, spectral_radius, Activation, CrossEntropy, KlToTarget,
    Matrix, Network, OutputLoss, ResidualLoss, Sample, Scaled, SquaredError, EIGEN_MAX_ITER, EIGEN_TOL,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn jittered(net: Network<f64>, rng: &mut ChaCha8Rng) -> Network<f64> {
    let theta: Vec<f64> = net.params().iter().map(|p| p + rng.random_range(-0.3..0.3)).collect();
    net.with_params(&theta).unwrap()
}

fn point(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn check<L: OutputLoss<f64>>(net: &Network<f64>, loss: &L, batch: &[Sample<f64>]) -> f64 {
    let analytic = loss_grad(net, loss, batch).unwrap().grad;
    let numeric = loss_gradient(net, loss, batch, DEFAULT_STEP).unwrap();
    relative_error(&analytic, &numeric)
}

#[test]
fn gradients_match_finite_differences_on_twenty_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for k in 0..20 {
        let hidden = [Activation::Tanh, Activation::Relu, Activation::Identity][k % 3];
        let (d, h, o) = (2 + k % 3, 3 + k % 4, 2 + k % 2);
        let err = match k % 5 {
            0 => {
                let net = jittered(Network::random(&[d, h, d], &[hidden, Activation::Tanh], 1.0, k as u64).unwrap(), &mut rng);
                let batch: Vec<_> = (0..4).map(|_| Sample::unlabeled(point(&mut rng, d))).collect();
                check(&net, &ResidualLoss, &batch)
            }
            1 => {
                let net = jittered(Network::random(&[d, h, o], &[hidden, Activation::Identity], 1.0, k as u64).unwrap(), &mut rng);
                let batch: Vec<_> = (0..4).map(|_| Sample::vector(point(&mut rng, d), point(&mut rng, o))).collect();
                check(&net, &SquaredError, &batch)
            }
            2 => {
                let net = jittered(Network::random(&[d, h, o], &[hidden, Activation::Softmax], 1.0, k as u64).unwrap(), &mut rng);
                let batch: Vec<_> = (0..4).map(|i| Sample::class(point(&mut rng, d), i % o)).collect();
                check(&net, &CrossEntropy, &batch)
            }
            3 => {
                let net = jittered(Network::random(&[d, h, o], &[hidden, Activation::Softmax], 1.0, k as u64).unwrap(), &mut rng);
                let batch: Vec<_> = (0..4)
                    .map(|_| {
                        let w: Vec<f64> = (0..o).map(|_| rng.random_range(0.1..1.0)).collect();
                        let s: f64 = w.iter().sum();
                        Sample::distribution(point(&mut rng, d), w.iter().map(|v| v / s).collect())
                    })
                    .collect();
                check(&net, &KlToTarget, &batch)
            }
            _ => {
                let net = jittered(Network::random(&[d, h, o], &[hidden, Activation::Tanh], 1.0, k as u64).unwrap(), &mut rng);
                let batch: Vec<_> = (0..4).map(|_| Sample::vector(point(&mut rng, d), point(&mut rng, o))).collect();
                check(&net, &Scaled { factor: 0.37, inner: SquaredError }, &batch)
            }
        };
        assert!(err < 1e-4, "instance {k}: relative error {err}");
    }
}

#[test]
fn tanh_jacobian_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for s in 0..10 {
        let net = jittered(Network::random(&[3, 5, 3], &[Activation::Tanh, Activation::Tanh], 1.5, s).unwrap(), &mut rng);
        let x = point(&mut rng, 3);
        let a = jacobian(&net, &x).unwrap();
        let n = network_jacobian(&net, &x, DEFAULT_STEP).unwrap();
        assert!(relative_error(a.as_slice(), n.as_slice()) < 1e-4);
    }
}

#[test]
fn forward_matches_direct_arithmetic() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let net = jittered(Network::random(&[3, 4, 2], &[Activation::Tanh, Activation::Identity], 1.0, 9).unwrap(), &mut rng);
    let x = point(&mut rng, 3);
    let mut h = x.clone();
    for (k, layer) in net.layers().iter().enumerate() {
        let w = &layer.weights;
        let mut z = vec![0.0; w.rows()];
        for i in 0..w.rows() {
            z[i] = layer.bias[i];
            for j in 0..w.cols() {
                z[i] += w[(i, j)] * h[j];
            }
        }
        h = if k == 0 { z.iter().map(|v| v.tanh()).collect() } else { z };
    }
    let out = forward(&net, &x).unwrap();
    for (a, b) in out.output().iter().zip(&h) {
        assert!((a - b).abs() < 1e-12);
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, n: usize) -> Matrix<f64> {
    Matrix::from_vec(n, n, (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

#[test]
fn spectral_radius_matches_dense_eigen_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..50 {
        let m = random_matrix(&mut rng, 8);
        let ours = spectral_radius(&m, EIGEN_TOL, EIGEN_MAX_ITER).unwrap();
        let dense = nalgebra::DMatrix::from_row_slice(8, 8, m.as_slice());
        let oracle = dense.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!((ours - oracle).abs() < 1e-6, "{ours} vs {oracle}");
    }
}

#[test]
fn alternating_history_converges_to_square_plus_damping() {
    let g = 0.7;
    let history: Vec<Vec<f64>> = (0..400).map(|i| vec![if i % 2 == 0 { g } else { -g }]).collect();
    let c = curvature_proxy(&history, 0.9, 1e-3).unwrap();
    assert!((c[0] - (g * g + 1e-3)).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn radius_scales_with_absolute_factor(seed in 0u64..10_000, c in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_matrix(&mut rng, 5);
        let r = spectral_radius(&m, EIGEN_TOL, EIGEN_MAX_ITER).unwrap();
        let rc = spectral_radius(&m.scale(c), EIGEN_TOL, EIGEN_MAX_ITER).unwrap();
        prop_assert!((rc - c.abs() * r).abs() < 1e-8 * (1.0 + r));
    }

    #[test]
    fn radius_is_transpose_invariant(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_matrix(&mut rng, 6);
        let a = spectral_radius(&m, EIGEN_TOL, EIGEN_MAX_ITER).unwrap();
        let b = spectral_radius(&m.transpose(), EIGEN_TOL, EIGEN_MAX_ITER).unwrap();
        prop_assert!((a - b).abs() < 1e-8 * (1.0 + a));
    }

    #[test]
    fn softmax_outputs_are_distributions(seed in 0u64..10_000, x in proptest::collection::vec(-5.0f64..5.0, 3)) {
        let net = Network::random(&[3, 4, 5], &[Activation::Relu, Activation::Softmax], 2.0, seed).unwrap();
        let p = net.eval(&x).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn curvature_proxy_at_least_damping(hist in proptest::collection::vec(proptest::collection::vec(-10.0f64..10.0, 4), 1..20), damping in 0.0f64..1.0) {
        let c = curvature_proxy(&hist, 0.9, damping).unwrap();
        prop_assert!(c.iter().all(|v| *v >= damping));
    }
}
