use manifold_lab::boundary::{
    pretrain_kl, stage0_pretrain, stage1_sft, stage2_perturbed, KlBreakdown, Reward, WeakBoundarySet, WeakPoint,
};
use manifold_lab::nncore::Sample;
use serde::Serialize;

use super::{sub_seed, uniform_points};
use crate::artifacts::{Artifacts, Assertion};
use crate::config::BoundaryBlock;

#[derive(Serialize)]
struct CurveRow {
    stage: &'static str,
    step: usize,
    loss: f64,
    boundary: Option<f64>,
}

#[derive(Serialize)]
struct Report {
    kl_before: KlBreakdown,
    kl_after: KlBreakdown,
    pretrain_loss: (f64, f64),
    sft_loss: (f64, f64),
    boundary_value: (f64, f64),
    perturbed_base_loss: (f64, f64),
    weakness_warnings: Vec<usize>,
}

fn ends(c: &[f64]) -> (f64, f64) {
    (c[0], c[c.len() - 1])
}

pub fn run(cfg: &BoundaryBlock, seed: u64, out: &mut Artifacts) -> anyhow::Result<Vec<Assertion>> {
    let net = cfg.net.build(seed)?;
    let classes = net.output_dim();
    let xs = uniform_points(cfg.data_points, 2, -1.0, 1.0, sub_seed(seed, 1));
    let sector = |x: &[f64], offset: f64| {
        let a = (x[1].atan2(x[0]) + offset).rem_euclid(std::f64::consts::TAU);
        ((a / std::f64::consts::TAU * classes as f64) as usize).min(classes - 1)
    };
    let pretrain: Vec<Sample<f64>> = xs.iter().map(|x| Sample::class(x.clone(), sector(x, 0.0))).collect();
    let sft: Vec<Sample<f64>> = xs.iter().map(|x| Sample::class(x.clone(), sector(x, 0.5))).collect();

    let kl_before = pretrain_kl(&net, &pretrain)?;
    let p0 = stage0_pretrain(&net, &pretrain, cfg.pretrain_steps, cfg.pretrain_lr)?;
    let kl_after = pretrain_kl(&p0.net, &pretrain)?;
    let p1 = stage1_sft(&p0.net, &sft, cfg.sft_steps, cfg.sft_lr)?;
    let wb = WeakBoundarySet::new(
        xs.iter()
            .take(cfg.weak_points)
            .map(|x| WeakPoint {
                input: x.clone(),
                eps: cfg.weak_eps,
                reward: Reward::NegSqDist(cfg.weak_target.clone()),
            })
            .collect(),
    )?;
    let p2 = stage2_perturbed(&p1.net, &sft, &wb, cfg.lambda, cfg.perturb_steps, cfg.perturb_lr)?;

    let mut rows = Vec::new();
    let plain = |stage, curve: &[f64]| {
        curve
            .iter()
            .enumerate()
            .map(|(step, &loss)| CurveRow {
                stage,
                step,
                loss,
                boundary: None,
            })
            .collect::<Vec<_>>()
    };
    rows.extend(plain("pretrain", &p0.loss_curve));
    rows.extend(plain("sft", &p1.loss_curve));
    rows.extend(p2.base_curve.iter().zip(&p2.boundary_curve).enumerate().map(|(step, (&loss, &b))| CurveRow {
        stage: "perturbed",
        step,
        loss,
        boundary: Some(b),
    }));
    out.csv("boundary_curves.csv", &rows)?;

    let report = Report {
        kl_before,
        kl_after,
        pretrain_loss: ends(&p0.loss_curve),
        sft_loss: ends(&p1.loss_curve),
        boundary_value: ends(&p2.boundary_curve),
        perturbed_base_loss: ends(&p2.base_curve),
        weakness_warnings: p2.weakness_warnings.clone(),
    };
    let kl_gap = (kl_after.kl - kl_after.kl_via_entropy()).abs();
    let asserts = vec![
        Assertion::new(
            "pretrain_reduces_loss",
            cfg.pretrain_steps == 0 || report.pretrain_loss.1 < report.pretrain_loss.0,
            format!("{:?}", report.pretrain_loss),
        ),
        Assertion::new(
            "sft_reduces_loss",
            cfg.sft_steps == 0 || report.sft_loss.1 < report.sft_loss.0,
            format!("{:?}", report.sft_loss),
        ),
        Assertion::new(
            "weak_reward_climbed",
            cfg.lambda == 0.0 || cfg.perturb_steps == 0 || report.boundary_value.1 > report.boundary_value.0,
            format!("{:?}", report.boundary_value),
        ),
        Assertion::new("kl_identity", kl_gap < 1e-9, format!("|KL - (CE - H)| = {kl_gap}")),
    ];
    out.json("boundary_report.json", &report)?;
    Ok(asserts)
}
