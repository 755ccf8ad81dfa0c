use std::collections::BTreeMap;

use manifold_lab::datagen::{
    data_complexity_batch, default_tags, generate, minibatch_sampler, nonlinear_complexity, Axis, ComplexityOptions,
    FunctionClass, FunctionSpec, Region, Scorer,
};
use proptest::prelude::*;

fn unit(dim: usize) -> Vec<Region> {
    vec![Region {
        lo: vec![-1.0; dim],
        hi: vec![1.0; dim],
    }]
}

#[test]
fn jump_is_visible_across_the_break() {
    let spec = FunctionSpec::canonical('D', 1, 0).unwrap();
    let gap = spec.eval(&[1e-6]) - spec.eval(&[-1e-6]);
    assert!((gap - 1.0).abs() < 1e-9);
}

#[test]
fn square_has_curvature_two() {
    let spec = FunctionSpec::new(1, 0, FunctionClass::P { coeffs: vec![vec![0.0, 0.0, 1.0]] }).unwrap();
    let r = nonlinear_complexity(&spec, &unit(1), &ComplexityOptions::default()).unwrap();
    assert!((r.curvature_total - 2.0).abs() < 1e-3, "{}", r.curvature_total);
    assert_eq!(r.boundary_total, 0.0);
}

#[test]
fn linear_has_no_complexity() {
    let spec = FunctionSpec::canonical('L', 2, 0).unwrap();
    let r = nonlinear_complexity(&spec, &unit(2), &ComplexityOptions::default()).unwrap();
    assert!(r.c_nonlinear.abs() < 1e-6);
}

#[test]
fn step_jump_reads_back() {
    let spec = FunctionSpec::new(
        1,
        0,
        FunctionClass::D {
            breaks: vec![0.0],
            jumps: vec![1.0],
            slope: 0.0,
        },
    )
    .unwrap();
    let r = nonlinear_complexity(&spec, &spec.natural_partition(), &ComplexityOptions::default()).unwrap();
    assert!((r.boundary_total - 1.0).abs() < 0.05);
    assert!(r.curvature_total.abs() < 1e-6);
    assert_eq!(r.boundary.len(), 1);
}

#[test]
fn canonical_ordering() {
    let opts = ComplexityOptions::default();
    let c = |tag| {
        let s = FunctionSpec::canonical(tag, 2, 0).unwrap();
        nonlinear_complexity(&s, &s.natural_partition(), &opts).unwrap().c_nonlinear
    };
    let (l, p, h) = (c('L'), c('P'), c('H'));
    assert!(l < p && p < h, "{l} {p} {h}");
}

#[test]
fn full_batch_equals_per_sample_sum() {
    let spec = FunctionSpec::canonical('H', 2, 3).unwrap();
    let data = generate(&spec, 50).unwrap();
    let tags = default_tags(&data, 1e-4);
    let weights: BTreeMap<Axis, f64> = [(Axis::Y, 0.5), (Axis::N, 2.0), (Axis::Z, 1.0)].into_iter().collect();
    let scorer = Scorer::Weighted { weights: weights.clone() };
    let total = data_complexity_batch(&tags, &scorer).unwrap();
    let mut direct = 0.0;
    for t in &tags {
        direct += weights.iter().map(|(a, w)| w * t[a]).sum::<f64>();
    }
    assert!((total - direct).abs() < 1e-9 * direct.abs().max(1.0));
}

#[test]
fn generated_outputs_follow_the_spec() {
    let spec = FunctionSpec::canonical('P', 1, 0).unwrap();
    for x in [-1.0, 0.0, 1.0] {
        assert_eq!(spec.eval(&[x]), x * x);
    }
    let data = generate(&spec, 200).unwrap();
    assert!(data.inputs.iter().flatten().all(|v| (-1.0..=1.0).contains(v)));
    for (x, y) in data.inputs.iter().zip(&data.outputs) {
        assert_eq!(*y, spec.eval(x));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn epoch_is_a_partition_of_the_dataset(n in 1usize..200, frac in 0.0f64..1.0, seed in 0u64..1000, epoch in 0u64..5) {
        let b = 1 + ((n - 1) as f64 * frac) as usize;
        let s = minibatch_sampler(n, b, seed).unwrap();
        let batches = s.epoch_batches(epoch);
        let mut all: Vec<usize> = batches.iter().flatten().copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        prop_assert!(batches.iter().all(|bt| bt.len() <= b));
        prop_assert_eq!(s.epoch_batches(epoch), minibatch_sampler(n, b, seed).unwrap().epoch_batches(epoch));
    }

    #[test]
    fn constant_scorer_counts(n in 0usize..50) {
        let tags = vec![BTreeMap::new(); n];
        prop_assert_eq!(data_complexity_batch(&tags, &Scorer::Constant { value: 1.0 }).unwrap(), n as f64);
    }
}
