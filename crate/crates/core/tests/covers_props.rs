use std::collections::BTreeSet;

use manifold_lab::covers::{
    active_covers, cover_drift, cover_map, cover_map_with, coverage_fraction, Criterion,
};
use manifold_lab::nncore::{descend, loss_grad, Activation, Matrix, Network, Sample, SquaredError};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn relu_net(seed: u64) -> Network<f64> {
    let net = Network::random(&[3, 6, 4], &[Activation::Relu, Activation::Relu], 1.5, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    let theta: Vec<f64> = net.params().iter().map(|p| p + rng.random_range(-0.2..0.2)).collect();
    net.with_params(&theta).unwrap()
}

fn samples(n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
}

#[test]
fn covers_match_per_sample_loop() {
    let net = relu_net(1);
    let data = samples(100, 2);
    let cm = cover_map(&net, &data, 0.0, 0).unwrap();
    for (k, layer) in net.layers().iter().enumerate() {
        for n in 0..layer.out_dim() {
            let mut brute = BTreeSet::new();
            for (i, x) in data.iter().enumerate() {
                let mut h = x.clone();
                for l in &net.layers()[..=k] {
                    h = (0..l.out_dim())
                        .map(|r| {
                            let z: f64 = l.bias[r] + (0..l.in_dim()).map(|c| l.weights[(r, c)] * h[c]).sum::<f64>();
                            z.max(0.0)
                        })
                        .collect();
                }
                if h[n] > 0.0 {
                    brute.insert(i);
                }
            }
            assert_eq!(cm.cover(k, n).unwrap(), &brute);
        }
    }
    for k in 0..2 {
        let union: BTreeSet<usize> = cm.entries[k].iter().flatten().copied().collect();
        assert_eq!(coverage_fraction(&cm, k).unwrap(), union.len() as f64 / 100.0);
    }
}

#[test]
fn identity_net_with_huge_negative_tau_covers_everything() {
    let net = Network::linear(Matrix::identity(3)).unwrap();
    let c = active_covers(&net, &[0.1, -5.0, 2.0], -1e18, Criterion::Value).unwrap();
    assert_eq!(c.len(), 3);
    let cm = cover_map(&net, &samples(10, 4), -1e18, 0).unwrap();
    assert_eq!(coverage_fraction(&cm, 0).unwrap(), 1.0);
}

#[test]
fn one_step_drift_on_five_samples() {
    let net = Network::affine(Matrix::from_vec(1, 1, vec![1.0]).unwrap(), vec![0.5], Activation::Relu).unwrap();
    let xs: Vec<Vec<f64>> = [-2.0, -1.0, 0.0, 1.0, 2.0].iter().map(|v| vec![*v]).collect();
    let batch: Vec<Sample<f64>> = xs.iter().map(|x| Sample::vector(x.clone(), vec![0.0])).collect();
    let before = cover_map(&net, &xs, 0.0, 0).unwrap();
    assert_eq!(before.entries[0][0], [2, 3, 4].into_iter().collect());

    // active samples x = 0, 1, 2 give h = 0.5, 1.5, 2.5; dL/dw = 2.6, dL/db = 1.8
    let mut stepped = net.clone();
    let g = loss_grad(&stepped, &SquaredError, &batch).unwrap().grad;
    assert!((g[0] - 2.6).abs() < 1e-12 && (g[1] - 1.8).abs() < 1e-12);
    descend(&mut stepped, &g, 0.3).unwrap();
    let p = stepped.params();
    assert!((p[0] - 0.22).abs() < 1e-12 && (p[1] + 0.04).abs() < 1e-12);

    let after = cover_map(&stepped, &xs, 0.0, 1).unwrap();
    assert_eq!(after.entries[0][0], [3, 4].into_iter().collect());
    let d = cover_drift(&before, &after).unwrap();
    assert!((d.distances[0][0] - 1.0 / 3.0).abs() < 1e-15);
    assert_eq!(d.coverage_before, vec![0.6]);
    assert_eq!(d.coverage_after, vec![0.4]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn membership_duality(seed in 0u64..5000, tau in -0.5f64..1.0) {
        let net = relu_net(seed);
        let data = samples(50, seed + 1);
        let cm = cover_map(&net, &data, tau, 0).unwrap();
        for (i, x) in data.iter().enumerate() {
            let active = active_covers(&net, x, tau, Criterion::Value).unwrap();
            for (k, layer) in cm.entries.iter().enumerate() {
                for (n, set) in layer.iter().enumerate() {
                    prop_assert_eq!(set.contains(&i), active.contains(&(k, n)));
                }
            }
        }
    }

    #[test]
    fn raising_tau_never_enlarges_covers(seed in 0u64..5000, lo in -1.0f64..1.0, gap in 0.0f64..1.0, magnitude in any::<bool>()) {
        let net = Network::random(&[3, 5, 3], &[Activation::Tanh, Activation::Tanh], 2.0, seed).unwrap();
        let data = samples(40, seed);
        let criterion = if magnitude { Criterion::Magnitude } else { Criterion::Value };
        let a = cover_map_with(&net, &data, lo, criterion, 0).unwrap();
        let b = cover_map_with(&net, &data, lo + gap, criterion, 0).unwrap();
        for (la, lb) in a.entries.iter().zip(&b.entries) {
            for (sa, sb) in la.iter().zip(lb) {
                prop_assert!(sb.is_subset(sa));
            }
        }
    }

    #[test]
    fn drift_is_bounded_and_vanishes_without_update(seed in 0u64..5000, delta in 0.0f64..0.5) {
        let net = relu_net(seed);
        let data = samples(30, seed);
        let cm = cover_map(&net, &data, 0.0, 0).unwrap();
        let same = cover_drift(&cm, &cover_map(&net, &data, 0.0, 1).unwrap()).unwrap();
        prop_assert!(same.distances.iter().flatten().all(|d| *d == 0.0));
        let moved = net.with_params(&net.params().iter().map(|p| p + delta).collect::<Vec<_>>()).unwrap();
        let d = cover_drift(&cm, &cover_map(&moved, &data, 0.0, 1).unwrap()).unwrap();
        prop_assert!(d.distances.iter().flatten().all(|v| (0.0..=1.0).contains(v)));
        prop_assert!(d.coverage_after.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
