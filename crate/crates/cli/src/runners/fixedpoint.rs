use manifold_lab::fixedpoint::{
    contraction_report, enumerate_fixed_points, iterate, lagrangian_train, mean_residual, perturbation_accel,
    train_residual, AccelerationReport, ContractionReport, Enumeration, IterateOptions, LagrangianConfig,
    LagrangianState, SquareMap,
};
use manifold_lab::nncore::{jacobian, Matrix, Network, NnError};
use serde::Serialize;

use super::{sub_seed, uniform_points};
use crate::artifacts::{Artifacts, Assertion};
use crate::config::FixedPointBlock;

/// `x ↦ −f(x)`.
struct Negated<'a>(&'a Network<f64>);

impl SquareMap<f64> for Negated<'_> {
    fn dim(&self) -> usize {
        self.0.input_dim()
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        Ok(self.0.eval(x)?.into_iter().map(|v| -v).collect())
    }

    fn jacobian(&self, x: &[f64]) -> Result<Matrix<f64>, NnError> {
        Ok(jacobian(self.0, x)?.scale(-1.0))
    }
}

#[derive(Serialize)]
struct StepRow {
    start: usize,
    step: usize,
    step_norm: f64,
}

#[derive(Serialize)]
struct LossRow {
    step: usize,
    loss: f64,
}

#[derive(Serialize)]
struct TrainingSummary {
    initial_mean_residual: f64,
    final_mean_residual: f64,
    steps: usize,
}

#[derive(Serialize)]
struct LagrangianSummary {
    budget: f64,
    converged: bool,
    relative_violation: f64,
    last: LagrangianState<f64>,
}

#[derive(Serialize)]
struct Report {
    enumeration: Enumeration<f64>,
    contraction: Vec<ContractionReport<f64>>,
    acceleration: Vec<AccelerationReport<f64>>,
    training: Option<TrainingSummary>,
    lagrangian: Option<LagrangianSummary>,
}

pub fn run(cfg: &FixedPointBlock, seed: u64, out: &mut Artifacts) -> anyhow::Result<Vec<Assertion>> {
    let mut asserts = Vec::new();
    let mut net = cfg.net.build(seed)?;
    let dim = net.input_dim();

    let mut training = None;
    if let Some(t) = &cfg.train {
        let data = uniform_points(t.data_points, dim, -1.0, 1.0, sub_seed(seed, 1));
        let before = mean_residual(&net, &data)?;
        let run = train_residual(&net, &data, t.steps, t.lr)?;
        let after = mean_residual(&run.net, &data)?;
        let rows: Vec<LossRow> = run
            .loss_curve
            .iter()
            .enumerate()
            .map(|(step, &loss)| LossRow { step, loss })
            .collect();
        out.csv("training_curve.csv", &rows)?;
        asserts.push(Assertion::new(
            "training_reduces_residual",
            after < before,
            format!("mean residual {before} -> {after}"),
        ));
        training = Some(TrainingSummary {
            initial_mean_residual: before,
            final_mean_residual: after,
            steps: t.steps,
        });
        net = run.net;
    }

    let mut lagrangian = None;
    if let Some(l) = &cfg.lagrangian {
        let data = uniform_points(20, dim, -1.0, 1.0, sub_seed(seed, 2));
        let budget = l.budget_fraction * net.param_norm_sq();
        let lc = LagrangianConfig {
            budget,
            steps: l.steps,
            lr_theta: l.lr_theta,
            lr_lambda: l.lr_lambda,
            tol: l.tol,
            lambda0: 0.0,
            freeze_lambda: false,
        };
        let run = lagrangian_train(&net, &data, &lc)?;
        let last = run.last().clone();
        let rel = last.constraint_value.abs() / budget;
        asserts.push(Assertion::new(
            "lagrangian_budget_met",
            rel < l.max_violation,
            format!("|g|/c = {rel}"),
        ));
        out.csv("lagrangian_history.csv", &run.history.iter().step_by(100).map(|s| LossRow { step: s.step, loss: s.energy }).collect::<Vec<_>>())?;
        lagrangian = Some(LagrangianSummary {
            budget,
            converged: run.converged,
            relative_violation: rel,
            last,
        });
    }

    let grid = cfg.grid.points(dim);
    let opts = IterateOptions::new(cfg.max_t, cfg.tol);
    let mut step_rows = Vec::new();
    for (start, h0) in grid.iter().enumerate() {
        let r = iterate(&net, h0, &opts)?;
        step_rows.extend(r.step_norms.iter().enumerate().map(|(step, &step_norm)| StepRow {
            start,
            step,
            step_norm,
        }));
    }
    out.csv("step_norms.csv", &step_rows)?;

    let enumeration = enumerate_fixed_points(&net, &grid, &opts)?;
    let bound = cfg.residual_factor * cfg.tol;
    let worst = enumeration
        .points
        .iter()
        .map(|p| p.report.residual_norm)
        .fold(0.0, f64::max);
    asserts.push(Assertion::new(
        "fixed_points_found",
        !enumeration.points.is_empty(),
        format!("{} points", enumeration.points.len()),
    ));
    asserts.push(Assertion::new(
        "residuals_within_bound",
        worst < bound,
        format!("worst residual {worst}, bound {bound}"),
    ));
    if let Some(n) = cfg.expect_points {
        asserts.push(Assertion::new(
            "expected_point_count",
            enumeration.points.len() == n,
            format!("found {}, expected {n}", enumeration.points.len()),
        ));
    }

    let mut contraction = Vec::new();
    let mut acceleration = Vec::new();
    for p in &enumeration.points {
        let c = contraction_report(&net, &p.report.point, cfg.tol)?;
        let consistent = c.stable == (c.end_to_end_radius < 1.0);
        contraction.push(c);
        if !consistent {
            asserts.push(Assertion::new("stability_flag", false, format!("at {:?}", p.report.point)));
        }
        if let Some(eps) = cfg.accel_eps {
            acceleration.push(perturbation_accel(&net, &Negated(&net), eps, &p.report.point)?);
        }
    }

    out.json(
        "fixedpoint_report.json",
        &Report {
            enumeration,
            contraction,
            acceleration,
            training,
            lagrangian,
        },
    )?;
    Ok(asserts)
}
