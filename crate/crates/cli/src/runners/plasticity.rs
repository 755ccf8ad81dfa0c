use manifold_lab::nncore::{descend, forward, loss_grad, Sample, SquaredError};
use manifold_lab::plasticity::{curvature_functional, rigidity_from_clouds, CurvatureConfig, RigidityConfig, RigidityPoint};
use serde::Serialize;

use super::{sub_seed, uniform_points};
use crate::artifacts::{Artifacts, Assertion};
use crate::config::PlasticityBlock;

#[derive(Serialize)]
struct Report {
    c0: f64,
    points: Vec<RigidityPoint>,
    fd_spot_check: f64,
}

pub fn run(cfg: &PlasticityBlock, seed: u64, out: &mut Artifacts) -> anyhow::Result<Vec<Assertion>> {
    let mut net = cfg.net.build(seed)?;
    let inputs = uniform_points(cfg.data_points, 2, -1.0, 1.0, sub_seed(seed, 1));
    let batch: Vec<Sample<f64>> = inputs
        .iter()
        .map(|x| Sample::vector(x.clone(), vec![(3.0 * x[0]).sin(), (3.0 * x[1]).tanh()]))
        .collect();

    let mut clouds = Vec::new();
    for t in 0..=cfg.steps {
        if t % cfg.checkpoint_every == 0 || t == cfg.steps {
            let cloud = inputs
                .iter()
                .map(|x| Ok(forward(&net, x)?.states[cfg.layer].clone()))
                .collect::<anyhow::Result<Vec<_>>>()?;
            clouds.push((t, cloud));
        }
        if t < cfg.steps {
            let g = loss_grad(&net, &SquaredError, &batch)?.grad;
            descend(&mut net, &g, cfg.lr)?;
        }
    }

    let rc = RigidityConfig {
        components: cfg.components,
        level: cfg.level,
        c0: cfg.c0,
        curvature: CurvatureConfig {
            samples_per_component: cfg.samples_per_component,
            band_fraction: cfg.band_fraction,
            seed: sub_seed(seed, 2),
        },
    };
    let (curve, fitted) = rigidity_from_clouds(&clouds, &rc)?;
    let points = curve.points().to_vec();
    out.csv("rigidity.csv", &points)?;
    let spot = curvature_functional(fitted.last().expect("two or more checkpoints"), &rc.curvature)?.fd_spot_check;

    let formula_ok = points.iter().all(|p| p.c_eff == cfg.c0 / (1.0 + p.r));
    let asserts = vec![
        Assertion::new("capacity_formula", formula_ok, format!("{} checkpoints", points.len())),
        Assertion::new("hessian_fd_agreement", spot < cfg.fd_tol, format!("worst relative gap {spot}")),
        Assertion::new(
            "rigidity_non_negative",
            points.iter().all(|p| p.r >= 0.0 && p.r.is_finite()),
            format!("{:?}", points.iter().map(|p| p.r).collect::<Vec<_>>()),
        ),
    ];
    out.json(
        "plasticity_report.json",
        &Report {
            c0: cfg.c0,
            points,
            fd_spot_check: spot,
        },
    )?;
    Ok(asserts)
}
