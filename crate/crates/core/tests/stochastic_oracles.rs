use manifold_lab::nncore::{Activation, Matrix, Network, Trajectory};
use manifold_lab::stochastic::{
    activation_stats, chain_error_model, depth_contraction_fit, exp_vs_union_experiment, layer_states,
    stochastic_fixed_point, union_bound_check, DeviationSpec, Event, ExpUnionConfig, InputSampler,
    StochasticConfig,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn scalar_linear(w: f64) -> Network<f64> {
    Network::linear(Matrix::from_vec(1, 1, vec![w]).unwrap()).unwrap()
}

#[test]
fn weighted_sum_variance_is_25() {
    let net = Network::affine(Matrix::from_vec(1, 2, vec![3.0, 4.0]).unwrap(), vec![0.0], Activation::Tanh).unwrap();
    let s = activation_stats(&net, 0, &InputSampler::standard_normal(2), 20_000, 1).unwrap();
    let node = &s.nodes[0];
    assert_eq!(node.analytic_variance, Some(25.0));
    assert!((node.variance - 25.0).abs() < 3.0 * node.variance_std_err);
    assert!(node.mean.abs() < 3.0 * node.mean_std_err);

    let doubled = net.scaled(2.0);
    let d = activation_stats(&doubled, 0, &InputSampler::standard_normal(2), 100, 1).unwrap();
    assert_eq!(d.nodes[0].analytic_variance, Some(100.0));
}

#[test]
fn union_bound_matches_set_counting_on_net_states() {
    let net = Network::random(&[2, 6, 3], &[Activation::Tanh, Activation::Tanh], 1.5, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let inputs: Vec<Vec<f64>> = (0..1000).map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
    let states = layer_states(&net, &inputs, 1).unwrap();
    let thresholds: Vec<f64> = (0..3).map(|_| rng.random_range(-0.5..0.5)).collect();
    let spec = DeviationSpec {
        events: thresholds.iter().enumerate().map(|(c, &t)| Event::Above { coord: c, threshold: t }).collect(),
    };
    let r = union_bound_check(&states, &spec).unwrap();
    let mut union = 0;
    let mut each = [0usize; 3];
    for h in &states {
        let mut any = false;
        for c in 0..3 {
            if h[c] > thresholds[c] {
                each[c] += 1;
                any = true;
            }
        }
        union += any as usize;
    }
    assert_eq!(r.p_union, union as f64 / 1000.0);
    assert_eq!(r.sum_p, each.iter().sum::<usize>() as f64 / 1000.0);
    assert!(r.holds && r.slack >= 0.0);
}

#[test]
fn disjoint_intervals_give_equality() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let samples: Vec<Vec<f64>> = (0..500).map(|_| vec![rng.random_range(-1.0..1.0)]).collect();
    let cuts = [-1.0, -0.4, 0.1, 0.2, 0.9];
    let spec = DeviationSpec {
        events: cuts.windows(2).map(|w| Event::Interval { coord: 0, lo: w[0], hi: w[1] }).collect(),
    };
    let r = union_bound_check(&samples, &spec).unwrap();
    assert_eq!(r.p_union, r.sum_p);
    assert_eq!(r.slack, 0.0);
}

fn synthetic(starts: &[f64], depth: usize, noise: f64, seed: u64) -> Vec<Trajectory<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, noise.max(f64::MIN_POSITIVE)).unwrap();
    starts
        .iter()
        .map(|&e0| {
            let mut e = e0;
            let mut states = vec![vec![e]];
            for _ in 1..depth {
                e = 0.7 * e + 0.01 + if noise > 0.0 { normal.sample(&mut rng) } else { 0.0 };
                states.push(vec![e]);
            }
            Trajectory { states }
        })
        .collect()
}

#[test]
fn depth_fit_recovers_synthetic_contraction() {
    let starts: Vec<f64> = (0..20).map(|i| 0.5 + 0.1 * i as f64).collect();
    let zeros = vec![vec![0.0]; 8];
    let exact = depth_contraction_fit(&synthetic(&starts, 8, 0.0, 0), Some(&zeros)).unwrap();
    assert!((exact.rho.unwrap() - 0.7).abs() < 1e-10);
    assert!((exact.xi.unwrap() - 0.01).abs() < 1e-10);
    assert!(exact.residuals.iter().all(|r| r.abs() < 1e-12));

    let noisy = depth_contraction_fit(&synthetic(&starts, 8, 0.005, 1), Some(&zeros)).unwrap();
    assert!((noisy.rho.unwrap() - 0.7).abs() < 0.05);
    assert_eq!(noisy.contractive, Some(true));
}

#[test]
fn chain_model_reference_value() {
    assert!((chain_error_model(0.01, 100).unwrap() - 0.3660).abs() < 1e-4);
    assert_eq!(chain_error_model(0.0, 1000).unwrap(), 1.0);
    assert_eq!(chain_error_model(0.4, 0).unwrap(), 1.0);
}

#[test]
fn ar1_stationary_scale() {
    let cfg = ExpUnionConfig {
        sigma: 0.1,
        depth: 40,
        n_runs: 2000,
        pilot_runs: 200,
        seed: 5,
    };
    let r = exp_vs_union_experiment(&scalar_linear(0.5), &cfg).unwrap();
    let expected = 0.1 / (1.0f64 - 0.25).sqrt();
    assert!((r.stationary_scale / expected - 1.0).abs() < 0.1);
    assert!(r.plateau.plateaued);
    assert!(r.rows.windows(2).all(|w| w[1].chain_pred >= w[0].chain_pred));
}

#[test]
fn ar1_stationary_law() {
    let cfg = StochasticConfig {
        sigma: 0.1,
        bias: vec![],
        burn_in: 500,
        n_draws: 10_000,
        seed: 6,
    };
    let s = stochastic_fixed_point(&scalar_linear(0.5), &cfg).unwrap();
    let expected = 0.1 / 0.75f64.sqrt();
    assert!((s.std[0] / expected - 1.0).abs() < 0.1);
    // draws are AR(1); inflate the naive standard error by √((1+ρ)/(1−ρ))
    let se = s.std[0] * (3.0f64 / 10_000.0).sqrt();
    assert!((s.mean[0] - s.x_star[0]).abs() < 3.0 * se);
    assert!(s.quantiles[0].windows(2).all(|w| w[0] <= w[1]));
}

fn random_spec(rng: &mut ChaCha8Rng, dim: usize) -> DeviationSpec {
    let k = rng.random_range(1..6);
    let events = (0..k)
        .map(|_| {
            let coord = rng.random_range(0..dim);
            match rng.random_range(0..3) {
                0 => Event::Above { coord, threshold: rng.random_range(-1.0..1.0) },
                1 => Event::AbsAbove { coord, threshold: rng.random_range(0.0..1.0) },
                _ => {
                    let lo = rng.random_range(-1.0..0.5);
                    Event::Interval { coord, lo, hi: lo + rng.random_range(0.0..1.0) }
                }
            }
        })
        .collect();
    DeviationSpec { events }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn union_bound_always_holds(seed in 0u64..1_000_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples: Vec<Vec<f64>> = (0..200).map(|_| (0..3).map(|_| rng.random_range(-1.5..1.5)).collect()).collect();
        let spec = random_spec(&mut rng, 3);
        let r = union_bound_check(&samples, &spec).unwrap();
        prop_assert!(r.holds);
        prop_assert!(r.p_union <= r.sum_p + 1e-15);
        prop_assert!(r.slack <= r.pairwise_overlap + 1e-12);
        let pmax = r.per_event.iter().copied().fold(0.0, f64::max);
        prop_assert!(r.p_union >= pmax);
    }

    #[test]
    fn chain_success_decreases_with_depth(eps in 0.0f64..1.0, n in 0u64..500) {
        let a = chain_error_model(eps, n).unwrap();
        let b = chain_error_model(eps, n + 1).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!(b <= a);
    }
}
