use manifold_lab::boundary::{
    contrastive_grad, contrastive_loss, contrastive_loss_grad, pretrain_kl, stage0_pretrain, stage1_sft,
    stage2_perturbed, unified_loss, unified_loss_grad, weak_boundary_grad, weak_boundary_value, BoundaryWeights,
    ContrastiveGroup, Distance, IntentionCost, Reward, WeakBoundarySet, WeakPoint,
};
use manifold_lab::nncore::fd::{gradient, relative_error, DEFAULT_STEP};
use manifold_lab::nncore::{Activation, Matrix, Network, Sample};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn classifier(seed: u64) -> Network<f64> {
    Network::random(&[2, 8, 2], &[Activation::Tanh, Activation::Softmax], 1.0, seed).unwrap()
}

#[test]
fn unlearnable_labels_floor_at_ln2() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut data = Vec::new();
    for _ in 0..10 {
        let x = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        data.push(Sample::class(x.clone(), 0));
        data.push(Sample::class(x, 1));
    }
    let run = stage0_pretrain(&classifier(2), &data, 2000, 0.5).unwrap();
    let last = *run.loss_curve.last().unwrap();
    assert!((last - std::f64::consts::LN_2).abs() < 0.01, "{last}");
    assert!(run.kl_curve.last().unwrap().kl < 0.01);
}

#[test]
fn kl_two_ways_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let xs: Vec<Vec<f64>> = (0..5).map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
    let data: Vec<Sample<f64>> = (0..40).map(|i| Sample::class(xs[i % 5].clone(), rng.random_range(0..2))).collect();
    let net = classifier(4);
    let kl = pretrain_kl(&net, &data).unwrap();
    assert!((kl.kl - kl.kl_via_entropy()).abs() < 1e-10);

    // direct sum over the empirical conditionals
    let mut direct = 0.0;
    for x in &xs {
        let group: Vec<_> = data.iter().filter(|s| &s.input == x).collect();
        let q = net.eval(x).unwrap();
        for c in 0..2 {
            let n_c = group.iter().filter(|s| s.target == manifold_lab::nncore::Target::Class(c)).count();
            if n_c > 0 {
                let p = n_c as f64 / group.len() as f64;
                direct += group.len() as f64 / data.len() as f64 * p * (p / q[c]).ln();
            }
        }
    }
    assert!((kl.kl - direct).abs() < 1e-10);
}

#[test]
fn sft_recovers_slope_two() {
    let net = Network::affine(Matrix::from_vec(1, 1, vec![0.0]).unwrap(), vec![0.0], Activation::Identity).unwrap();
    let pairs: Vec<Sample<f64>> = [-1.0, -0.5, 0.0, 0.5, 1.0].iter().map(|&x| Sample::vector(vec![x], vec![2.0 * x])).collect();
    let run = stage1_sft(&net, &pairs, 2000, 0.1).unwrap();
    let p = run.net.params();
    assert!((p[0] - 2.0).abs() < 1e-3 && p[1].abs() < 1e-3);
    assert!(run.loss_curve.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn weak_boundary_matches_direct_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let net = Network::random(&[2, 4, 2], &[Activation::Tanh, Activation::Identity], 1.0, 6).unwrap();
    let points: Vec<WeakPoint> = (0..10)
        .map(|j| WeakPoint {
            input: vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
            eps: rng.random_range(0.0..0.2),
            reward: if j % 2 == 0 {
                Reward::NegSqDist(vec![0.3, -0.1])
            } else {
                Reward::custom(|h| h[0].sin() + h[1])
            },
        })
        .collect();
    let mut direct = 0.0;
    for p in &points {
        let h = net.eval(&p.input).unwrap();
        let r = match &p.reward {
            Reward::NegSqDist(t) => -((h[0] - t[0]).powi(2) + (h[1] - t[1]).powi(2)),
            Reward::Custom(_) => h[0].sin() + h[1],
        };
        direct += p.eps * r;
    }
    let wb = WeakBoundarySet::new(points).unwrap();
    assert!((weak_boundary_value(&net, &wb).unwrap() - direct).abs() < 1e-12);

    for c in [0.5, 3.0] {
        let scaled = wb.scaled(c);
        let analytic = weak_boundary_grad(&net, &scaled).unwrap().grad;
        let numeric: Vec<f64> = gradient(
            |theta| Ok(weak_boundary_value(&net.with_params(theta)?, &wb).unwrap()),
            &net.params(),
            DEFAULT_STEP,
        )
        .unwrap()
        .iter()
        .map(|g| c * g)
        .collect();
        assert!(relative_error(&analytic, &numeric) < 1e-4);
    }
}

#[test]
fn reward_pulls_probe_toward_target() {
    let net = Network::affine(Matrix::from_vec(1, 1, vec![1.0]).unwrap(), vec![0.0], Activation::Identity).unwrap();
    let pairs = vec![Sample::vector(vec![1.0], vec![1.0])];
    let target = 0.5;
    let wb = WeakBoundarySet::new(vec![WeakPoint {
        input: vec![0.0],
        eps: 0.1,
        reward: Reward::NegSqDist(vec![target]),
    }])
    .unwrap();
    let run = stage2_perturbed(&net, &pairs, &wb, 5.0, 200, 0.05).unwrap();
    // B = −ε·d², so the distance shrinks exactly when B grows
    let dist: Vec<f64> = run.boundary_curve.iter().map(|b| (-b / 0.1).sqrt()).collect();
    assert!(dist.windows(2).all(|w| w[1] < w[0]), "{dist:?}");
}

#[test]
fn zero_lambda_reproduces_sft() {
    let net = Network::random(&[2, 5, 2], &[Activation::Tanh, Activation::Identity], 1.0, 8).unwrap();
    let pairs: Vec<Sample<f64>> = (0..6).map(|i| Sample::vector(vec![i as f64 * 0.2, 0.1], vec![0.3, -(i as f64) * 0.1])).collect();
    let wb = WeakBoundarySet::new(vec![WeakPoint {
        input: vec![0.0, 0.0],
        eps: 0.3,
        reward: Reward::NegSqDist(vec![1.0, 1.0]),
    }])
    .unwrap();
    let a = stage1_sft(&net, &pairs, 50, 0.1).unwrap();
    let b = stage2_perturbed(&net, &pairs, &wb, 0.0, 50, 0.1).unwrap();
    assert_eq!(a.net.params(), b.net.params());
    assert_eq!(a.loss_curve, b.base_curve);
}

#[test]
fn unified_thirds_match_hand_combination() {
    let net = Network::random(&[2, 4, 2], &[Activation::Tanh, Activation::Softmax], 1.0, 9).unwrap();
    let pretrain = vec![Sample::class(vec![0.1, 0.2], 0), Sample::class(vec![-0.3, 0.5], 1)];
    let sup = vec![Sample::class(vec![0.7, -0.7], 1)];
    let intention = IntentionCost {
        probe: vec![0.0, 1.0],
        target: vec![0.9, 0.1],
    };
    let third = 1.0 / 3.0;
    let terms = unified_loss(&net, &pretrain, BoundaryWeights::new(third, third).unwrap(), &intention, &sup).unwrap();

    let ce = |x: &[f64], y: usize| -net.eval(x).unwrap()[y].ln();
    let stat = 0.5 * (ce(&[0.1, 0.2], 0) + ce(&[-0.3, 0.5], 1));
    let out = net.eval(&[0.0, 1.0]).unwrap();
    let int = (out[0] - 0.9).powi(2) + (out[1] - 0.1).powi(2);
    let supervised = ce(&[0.7, -0.7], 1);
    let expected = third * stat + third * int + (1.0 - 2.0 * third) * supervised;
    assert!((terms.total - expected).abs() < 1e-12);

    let (_, g) = unified_loss_grad(&net, &pretrain, BoundaryWeights::new(third, third).unwrap(), &intention, &sup).unwrap();
    let numeric = gradient(
        |theta| Ok(unified_loss(&net.with_params(theta)?, &pretrain, BoundaryWeights::new(third, third).unwrap(), &intention, &sup).unwrap().total),
        &net.params(),
        DEFAULT_STEP,
    )
    .unwrap();
    assert!(relative_error(&g, &numeric) < 1e-4);
}

#[test]
fn contrastive_closed_form() {
    for big_d in [0.5f64, 2.0, 10.0, 50.0] {
        let neg = vec![vec![big_d.sqrt(), 0.0]];
        let l = contrastive_loss(&[0.0, 0.0], &[0.0, 0.0], &neg, Distance::SquaredEuclidean).unwrap();
        assert!((l - (1.0 + (-big_d).exp()).ln()).abs() < 1e-12);
    }
    let far = contrastive_loss(&[0.0], &[0.0], &[vec![100.0]], Distance::SquaredEuclidean).unwrap();
    assert!(far < 1e-300);
}

#[test]
fn contrastive_network_gradient_matches_finite_differences() {
    let net = Network::random(&[2, 4, 3], &[Activation::Tanh, Activation::Identity], 1.0, 10).unwrap();
    let groups = vec![
        ContrastiveGroup {
            anchor: vec![0.1, 0.2],
            positive: vec![0.15, 0.25],
            negatives: vec![vec![-0.5, 0.4], vec![0.9, -0.1]],
        },
        ContrastiveGroup {
            anchor: vec![-0.3, 0.0],
            positive: vec![-0.2, 0.1],
            negatives: vec![vec![0.6, 0.6]],
        },
    ];
    for d in [Distance::SquaredEuclidean, Distance::Euclidean] {
        let g = contrastive_loss_grad(&net, &groups, d).unwrap().grad;
        let numeric = gradient(
            |theta| Ok(contrastive_loss_grad(&net.with_params(theta)?, &groups, d).unwrap().value),
            &net.params(),
            DEFAULT_STEP,
        )
        .unwrap();
        assert!(relative_error(&g, &numeric) < 1e-4);
    }
}

fn vec3() -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-2.0f64..2.0, 3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn contrastive_ignores_negative_order(a in vec3(), p in vec3(), mut negs in proptest::collection::vec(vec3(), 1..6)) {
        let l1 = contrastive_loss(&a, &p, &negs, Distance::SquaredEuclidean).unwrap();
        negs.reverse();
        let l2 = contrastive_loss(&a, &p, &negs, Distance::SquaredEuclidean).unwrap();
        prop_assert!((l1 - l2).abs() < 1e-12);
        prop_assert!(l1 >= 0.0);
    }

    #[test]
    fn contrastive_anchor_gradient_matches_fd(a in vec3(), p in vec3(), negs in proptest::collection::vec(vec3(), 1..4)) {
        let g = contrastive_grad(&a, &p, &negs, Distance::SquaredEuclidean).unwrap();
        let numeric = gradient(|x| Ok(contrastive_loss(x, &p, &negs, Distance::SquaredEuclidean).unwrap()), &a, DEFAULT_STEP).unwrap();
        prop_assert!(relative_error(&g.anchor, &numeric) < 1e-4 || manifold_lab::nncore::scalar::norm(&numeric) < 1e-7);
    }

    #[test]
    fn weak_boundary_is_linear_in_eps(c in 0.0f64..10.0, eps in 0.0f64..1.0) {
        let net = Network::random(&[2, 3, 2], &[Activation::Tanh, Activation::Identity], 1.0, 1).unwrap();
        let wb = WeakBoundarySet::new(vec![WeakPoint { input: vec![0.2, 0.4], eps, reward: Reward::NegSqDist(vec![1.0, 0.0]) }]).unwrap();
        let b = weak_boundary_value(&net, &wb).unwrap();
        let bc = weak_boundary_value(&net, &wb.scaled(c)).unwrap();
        prop_assert!((bc - c * b).abs() < 1e-12 * (1.0 + bc.abs()));
    }
}
