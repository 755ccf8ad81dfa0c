use manifold_lab::nncore::{Activation, Matrix};
use manifold_lab::stochastic::{
    exp_vs_union_experiment, layer_states, stochastic_fixed_point, union_bound_check, DeviationSpec, Event,
    ExpUnionConfig, ExpUnionReport, StochasticConfig, StochasticFixedPoint, UnionBoundReport,
};
use manifold_lab::nncore::spectral_radius;
use manifold_lab::nncore::{EIGEN_MAX_ITER, EIGEN_TOL};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{sub_seed, uniform_points};
use crate::artifacts::{Artifacts, Assertion};
use crate::config::StochasticBlock;

#[derive(Serialize)]
struct UnionSummary {
    specs: usize,
    all_hold: bool,
    disjoint: UnionBoundReport,
    max_slack: f64,
}

#[derive(Serialize)]
struct Report {
    union: UnionSummary,
    exp_vs_union: ExpUnionReport,
    stationary: StochasticFixedPoint,
    analytic_std: Option<Vec<f64>>,
}

fn random_spec(rng: &mut ChaCha8Rng, dim: usize) -> DeviationSpec {
    let k = rng.random_range(1..6);
    let events = (0..k)
        .map(|_| {
            let coord = rng.random_range(0..dim);
            match rng.random_range(0..3) {
                0 => Event::Above {
                    coord,
                    threshold: rng.random_range(-1.0..1.0),
                },
                1 => Event::AbsAbove {
                    coord,
                    threshold: rng.random_range(0.0..1.0),
                },
                _ => {
                    let lo = rng.random_range(-1.0..0.5);
                    Event::Interval {
                        coord,
                        lo,
                        hi: lo + rng.random_range(0.0..1.0),
                    }
                }
            }
        })
        .collect();
    DeviationSpec { events }
}

/// Stationary std of `h ← A h + δ`, `δ ~ N(0, σ² I)`, from `Σ = A Σ Aᵀ + σ² I`.
fn lyapunov_std(a: &Matrix<f64>, sigma: f64) -> Vec<f64> {
    let n = a.rows();
    let q = Matrix::identity(n).scale(sigma * sigma);
    let mut s = q.clone();
    for _ in 0..10_000 {
        let next = a
            .matmul(&s)
            .and_then(|m| m.matmul(&a.transpose()))
            .and_then(|m| m.add(&q))
            .expect("square");
        let done = next.sub(&s).expect("square").frobenius() < 1e-15 * next.frobenius();
        s = next;
        if done {
            break;
        }
    }
    (0..n).map(|i| s[(i, i)].sqrt()).collect()
}

pub fn run(cfg: &StochasticBlock, seed: u64, out: &mut Artifacts) -> anyhow::Result<Vec<Assertion>> {
    let mut net = cfg.net.build(seed)?;
    let dim = net.input_dim();
    if let Some(target) = cfg.rescale_to_radius {
        let r = spectral_radius(&net.layers()[0].weights, EIGEN_TOL, EIGEN_MAX_ITER)?;
        anyhow::ensure!(r > 0.0, "cannot rescale a map with zero spectral radius");
        net = net.scaled(target / r);
    }
    let mut asserts = Vec::new();

    let inputs = uniform_points(cfg.union_samples, dim, -1.0, 1.0, sub_seed(seed, 1));
    let states = layer_states(&net, &inputs, net.layers().len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, 2));
    let mut all_hold = true;
    let mut max_slack: f64 = 0.0;
    for _ in 0..cfg.union_specs {
        let r = union_bound_check(&states, &random_spec(&mut rng, dim))?;
        all_hold &= r.holds;
        max_slack = max_slack.max(r.slack);
    }
    let bands = [(-0.6, -0.3), (-0.2, -0.05), (0.05, 0.2), (0.3, 0.6)];
    let disjoint = union_bound_check(
        &states,
        &DeviationSpec {
            events: bands.iter().map(|&(lo, hi)| Event::Interval { coord: 0, lo, hi }).collect(),
        },
    )?;
    asserts.push(Assertion::new("union_bound_holds", all_hold, format!("{} specs", cfg.union_specs)));
    asserts.push(Assertion::new(
        "disjoint_equality",
        disjoint.p_union == disjoint.sum_p,
        format!("p_union {} sum_p {}", disjoint.p_union, disjoint.sum_p),
    ));

    let exp = exp_vs_union_experiment(
        &net,
        &ExpUnionConfig {
            sigma: cfg.sigma,
            depth: cfg.depth,
            n_runs: cfg.n_runs,
            pilot_runs: cfg.pilot_runs,
            seed: sub_seed(seed, 3),
        },
    )?;
    out.csv("exp_vs_union.csv", &exp.rows)?;
    asserts.push(Assertion::new(
        "deviation_plateau",
        exp.plateau.relative_gap <= cfg.plateau_gap,
        format!("relative gap {}", exp.plateau.relative_gap),
    ));
    asserts.push(Assertion::new(
        "chain_overpredicts",
        exp.chain_ratio.is_some_and(|r| r >= cfg.chain_ratio_min),
        format!("chain/measured at depth {}: {:?}", cfg.depth, exp.chain_ratio),
    ));

    let stationary = stochastic_fixed_point(
        &net,
        &StochasticConfig {
            sigma: cfg.sigma,
            bias: Vec::new(),
            burn_in: cfg.burn_in,
            n_draws: cfg.n_draws,
            seed: sub_seed(seed, 4),
        },
    )?;
    let linear = net.layers().len() == 1 && net.layers()[0].activation == Activation::Identity;
    let analytic_std = if linear && stationary.rho < 1.0 {
        Some(lyapunov_std(&net.layers()[0].weights, cfg.sigma))
    } else {
        None
    };
    if let Some(a) = &analytic_std {
        let worst = stationary
            .std
            .iter()
            .zip(a)
            .map(|(s, t)| (s / t - 1.0).abs())
            .fold(0.0, f64::max);
        asserts.push(Assertion::new(
            "stationary_std",
            worst <= cfg.std_rel_tol,
            format!("worst relative gap {worst}"),
        ));
    }

    out.json(
        "stochastic_report.json",
        &Report {
            union: UnionSummary {
                specs: cfg.union_specs,
                all_hold,
                disjoint,
                max_slack,
            },
            exp_vs_union: exp,
            stationary,
            analytic_std,
        },
    )?;
    Ok(asserts)
}
