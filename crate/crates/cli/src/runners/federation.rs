use std::collections::{BTreeMap, BTreeSet};

use manifold_lab::federation::{
    fixed_point_check, freeze_anchors, init_federation, param_hash, run_round, FixedPointCheck, Hyper, RoundMetrics,
};
use manifold_lab::nncore::Sample;
use serde::Serialize;

use super::{sub_seed, uniform_points};
use crate::artifacts::{Artifacts, Assertion};
use crate::config::FederationBlock;

#[derive(Serialize)]
struct Report {
    scores: Vec<f64>,
    final_metrics: RoundMetrics,
    fixed_point: FixedPointCheck,
    anchor_hashes: BTreeMap<usize, String>,
}

pub fn run(cfg: &FederationBlock, seed: u64, out: &mut Artifacts) -> anyhow::Result<Vec<Assertion>> {
    let foundation = cfg.foundation.build(seed)?;
    let classes = foundation.output_dim();
    let label = |x: &[f64]| {
        let a = x[1].atan2(x[0]).rem_euclid(std::f64::consts::TAU);
        ((a / std::f64::consts::TAU * classes as f64) as usize).min(classes - 1)
    };
    let partition = |k: u64, shift: f64| -> Vec<Sample<f64>> {
        uniform_points(cfg.samples_per_client, 2, -1.0, 1.0, sub_seed(seed, 10 + k))
            .into_iter()
            .map(|mut x| {
                x[0] += shift;
                let y = label(&x);
                Sample::class(x, y)
            })
            .collect()
    };
    let partitions: Vec<Vec<Sample<f64>>> = if cfg.shared_data {
        let p = partition(0, 0.0);
        vec![p; cfg.clients]
    } else {
        (0..cfg.clients)
            .map(|i| partition(i as u64, 0.5 * i as f64 - 0.25 * (cfg.clients - 1) as f64))
            .collect()
    };
    let h = &cfg.hyper;
    let hyper = Hyper {
        beta: h.beta,
        lambda: h.lambda,
        eta: h.eta,
        damping: h.damping,
        init_jitter: h.init_jitter,
        identity_metric: h.identity_metric,
    };
    let mut state = init_federation(&foundation, cfg.clients, partitions, hyper, sub_seed(seed, 1))?;
    let anchors: BTreeSet<usize> = cfg.anchors.iter().copied().collect();
    if !anchors.is_empty() {
        state = freeze_anchors(&state, &anchors)?;
    }
    let before: BTreeMap<usize, String> = anchors.iter().map(|&i| (i, param_hash(&state.clients[i]))).collect();

    let mut rows = Vec::new();
    let mut scores = Vec::new();
    let mut last = None;
    for _ in 0..cfg.rounds {
        let (next, m) = run_round(&state)?;
        rows.extend(m.rows());
        scores.push(m.equilibrium_score);
        state = next;
        last = Some(m);
    }
    out.csv("federation_rounds.csv", &rows)?;
    let final_metrics = last.expect("at least one round");
    let after: BTreeMap<usize, String> = anchors.iter().map(|&i| (i, param_hash(&state.clients[i]))).collect();

    let mut asserts = vec![Assertion::new(
        "finite_metrics",
        rows.iter()
            .all(|r| r.local_loss.is_finite() && r.kl_mixture.is_finite() && r.grad_norm.is_finite() && r.equilibrium_score.is_finite()),
        format!("{} rows", rows.len()),
    )];
    if !anchors.is_empty() {
        asserts.push(Assertion::new(
            "anchors_unchanged",
            before == after,
            format!("{} anchors over {} rounds", anchors.len(), cfg.rounds),
        ));
    }
    if cfg.expect_alignment {
        let (first, end) = (scores[0], scores[scores.len() - 1]);
        asserts.push(Assertion::new(
            "alignment_trend",
            end < first,
            format!("equilibrium score round 1 {first}, round {} {end}", cfg.rounds),
        ));
    }
    out.json(
        "federation_report.json",
        &Report {
            fixed_point: fixed_point_check(&state, 1e-3)?,
            scores,
            final_metrics,
            anchor_hashes: after,
        },
    )?;
    Ok(asserts)
}
