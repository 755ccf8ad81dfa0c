use std::collections::BTreeMap;

use manifold_lab::datagen::{
    data_complexity_batch, default_tags, generate, nonlinear_complexity, ComplexityOptions, ComplexityReport,
    FunctionClass, FunctionSpec, Scorer,
};
use serde::Serialize;

use super::{fmt, sub_seed};
use crate::artifacts::{Artifacts, Assertion};
use crate::config::{class_tag, DatagenBlock};

#[derive(Serialize)]
struct ClassReport {
    spec: FunctionSpec,
    complexity: ComplexityReport,
    data_complexity: f64,
}

pub fn run(cfg: &DatagenBlock, seed: u64, out: &mut Artifacts) -> anyhow::Result<Vec<Assertion>> {
    let opts = ComplexityOptions {
        fd_step: cfg.fd_step,
        grid: cfg.grid,
    };
    let scorer = Scorer::default_weighted();
    let mut reports: BTreeMap<String, ClassReport> = BTreeMap::new();
    for (k, name) in cfg.classes.iter().enumerate() {
        let spec = FunctionSpec::canonical(class_tag("datagen.classes", name)?, cfg.dim, sub_seed(seed, k as u64))?;
        let data = generate(&spec, cfg.n)?;
        let mut header: Vec<String> = (0..cfg.dim).map(|i| format!("x{i}")).collect();
        header.push("y".into());
        let rows: Vec<Vec<String>> = data
            .inputs
            .iter()
            .zip(&data.outputs)
            .map(|(x, &y)| x.iter().copied().chain([y]).map(fmt).collect())
            .collect();
        out.csv_records(&format!("dataset_{name}.csv"), &header, &rows)?;
        let complexity = nonlinear_complexity(&spec, &spec.natural_partition(), &opts)?;
        let data_complexity = data_complexity_batch(&default_tags(&data, cfg.fd_step), &scorer)?;
        reports.insert(
            name.clone(),
            ClassReport {
                spec,
                complexity,
                data_complexity,
            },
        );
    }

    let mut asserts = Vec::new();
    let c = |t: &str| reports.get(t).map(|r| r.complexity.c_nonlinear);
    if let (Some(l), Some(p), Some(h)) = (c("L"), c("P"), c("H")) {
        asserts.push(Assertion::new(
            "complexity_ordering",
            l < p && p < h,
            format!("L {l}, P {p}, H {h}"),
        ));
    }
    if let Some(d) = reports.get("D") {
        if let FunctionClass::D { jumps, .. } = &d.spec.class {
            let configured: f64 = jumps.iter().map(|j| j.abs()).sum();
            let measured = d.complexity.boundary_total;
            let rel = (measured - configured).abs() / configured;
            asserts.push(Assertion::new(
                "jump_recovered",
                rel <= cfg.jump_rel_tol,
                format!("boundary {measured}, configured {configured}"),
            ));
        }
    }
    out.json("complexity.json", &reports)?;
    Ok(asserts)
}
