use manifold_lab::covers::{cover_drift, cover_map, cover_rows, coverage_fraction, CoverDriftReport};
use manifold_lab::datagen::{generate, FunctionSpec};
use manifold_lab::nncore::{descend, loss_grad, loss_value, Sample, SquaredError};
use serde::Serialize;

use super::sub_seed;
use crate::artifacts::{Artifacts, Assertion};
use crate::config::{class_tag, CoversBlock};

#[derive(Serialize)]
struct Snapshot {
    iteration: usize,
    loss: f64,
    coverage: Vec<f64>,
}

#[derive(Serialize)]
struct Report {
    target: String,
    snapshots: Vec<Snapshot>,
    first_to_last: CoverDriftReport,
}

pub fn run(cfg: &CoversBlock, seed: u64, out: &mut Artifacts) -> anyhow::Result<Vec<Assertion>> {
    let mut net = cfg.net.build(seed)?;
    let dim = net.input_dim();
    let spec = FunctionSpec::canonical(class_tag("covers.target", &cfg.target)?, dim, sub_seed(seed, 1))?;
    let data = generate(&spec, cfg.data_points)?;
    let batch: Vec<Sample<f64>> = data
        .inputs
        .iter()
        .zip(&data.outputs)
        .map(|(x, &y)| Sample::vector(x.clone(), vec![y]))
        .collect();

    let mut series = Vec::new();
    let mut snapshots = Vec::new();
    for t in 0..=cfg.steps {
        if t % cfg.record_every == 0 || t == cfg.steps {
            let cm = cover_map(&net, &data.inputs, cfg.tau, t)?;
            let coverage = (0..cm.entries.len())
                .map(|k| coverage_fraction(&cm, k))
                .collect::<Result<Vec<_>, _>>()?;
            snapshots.push(Snapshot {
                iteration: t,
                loss: loss_value(&net, &SquaredError, &batch)?,
                coverage,
            });
            series.push(cm);
        }
        if t < cfg.steps {
            let g = loss_grad(&net, &SquaredError, &batch)?.grad;
            descend(&mut net, &g, cfg.lr)?;
        }
    }

    let rows = cover_rows(&series)?;
    out.csv("cover_rows.csv", &rows)?;
    let first_to_last = cover_drift(&series[0], &series[series.len() - 1])?;

    let unit = |v: f64| (0.0..=1.0).contains(&v);
    let jac_ok = rows.iter().filter_map(|r| r.jaccard_vs_prev).all(unit);
    let cov_ok = snapshots.iter().flat_map(|s| &s.coverage).all(|&c| unit(c));
    let l0 = snapshots[0].loss;
    let l1 = snapshots[snapshots.len() - 1].loss;
    let asserts = vec![
        Assertion::new("jaccard_in_unit_interval", jac_ok, format!("{} rows", rows.len())),
        Assertion::new("coverage_in_unit_interval", cov_ok, format!("{} snapshots", snapshots.len())),
        Assertion::new("training_reduces_loss", cfg.steps == 0 || l1 < l0, format!("loss {l0} -> {l1}")),
    ];
    out.json(
        "cover_report.json",
        &Report {
            target: cfg.target.clone(),
            snapshots,
            first_to_last,
        },
    )?;
    Ok(asserts)
}
