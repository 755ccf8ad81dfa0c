//! Config-driven experiment runner: one subcommand per module plus fail-soft suites.

pub mod artifacts;
pub mod config;
pub mod runners;

use std::path::{Path, PathBuf};

use serde::Serialize;

use artifacts::{
    code_version, now, output_entries, read_manifest, sha256_hex, write_manifest, Artifacts, Assertion, RunManifest,
    Status, RESOLVED_CONFIG,
};
use config::{Command, ConfigError, RunConfig, SuiteBlock};

/// Default output root when neither `--out` nor the config names a directory.
pub const OUT_ENV: &str = "MANIFOLD_LAB_OUT";

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct Invocation {
    pub command: Command,
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub quiet: bool,
}

impl Invocation {
    pub fn new(command: Command) -> Self {
        Self {
            command,
            config: None,
            seed: None,
            out: None,
            quiet: true,
        }
    }
}

fn out_dir(inv: &Invocation, configured: Option<&str>, experiment: &str) -> PathBuf {
    if let Some(o) = &inv.out {
        return o.clone();
    }
    if let Some(o) = configured {
        return PathBuf::from(o);
    }
    let root = std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"));
    root.join(experiment)
}

#[derive(Debug, Serialize)]
struct MemberSummary {
    name: String,
    command: Command,
    exit_code: i32,
    status: Option<Status>,
    failed_assertions: Vec<String>,
    error: Option<String>,
}

#[derive(Debug, Serialize)]
struct SuiteSummary {
    passed: bool,
    members: Vec<MemberSummary>,
}

fn run_suite(block: &SuiteBlock, inv: &Invocation, out: &mut Artifacts) -> anyhow::Result<Vec<Assertion>> {
    let base = inv
        .config
        .as_deref()
        .and_then(Path::parent)
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let mut members = Vec::new();
    let mut asserts = Vec::new();
    for m in &block.members {
        let member = Invocation {
            command: m.command,
            config: m.config.as_ref().map(|c| base.join(c)),
            seed: inv.seed,
            out: Some(out.dir().join(&m.name)),
            quiet: inv.quiet,
        };
        let code = execute(&member);
        let manifest = read_manifest(&out.dir().join(&m.name)).ok();
        let failed: Vec<String> = manifest
            .iter()
            .flat_map(|mf| mf.assertions.iter().filter(|a| !a.passed).map(|a| a.name.clone()))
            .collect();
        asserts.push(Assertion::new(
            &m.name,
            code == EXIT_OK,
            format!("{} exited {code}", m.command),
        ));
        members.push(MemberSummary {
            name: m.name.clone(),
            command: m.command,
            exit_code: code,
            status: manifest.as_ref().map(|mf| mf.status),
            failed_assertions: failed,
            error: manifest.and_then(|mf| mf.error),
        });
    }
    out.json(
        "summary.json",
        &SuiteSummary {
            passed: asserts.iter().all(|a| a.passed),
            members,
        },
    )?;
    Ok(asserts)
}

fn dispatch(rc: &RunConfig, inv: &Invocation, out: &mut Artifacts) -> anyhow::Result<Vec<Assertion>> {
    let seed = rc.seed;
    let missing = || ConfigError::Invalid("resolved config lacks its block".into());
    match inv.command {
        Command::Fixedpoint => {
            let b = rc.fixedpoint.as_ref().ok_or_else(missing)?;
            b.validate()?;
            runners::fixedpoint::run(b, seed, out)
        }
        Command::Covers => {
            let b = rc.covers.as_ref().ok_or_else(missing)?;
            b.validate()?;
            runners::covers::run(b, seed, out)
        }
        Command::Boundary => {
            let b = rc.boundary.as_ref().ok_or_else(missing)?;
            b.validate()?;
            runners::boundary::run(b, seed, out)
        }
        Command::Stochastic => {
            let b = rc.stochastic.as_ref().ok_or_else(missing)?;
            b.validate()?;
            runners::stochastic::run(b, seed, out)
        }
        Command::Plasticity => {
            let b = rc.plasticity.as_ref().ok_or_else(missing)?;
            b.validate()?;
            runners::plasticity::run(b, seed, out)
        }
        Command::Datagen => {
            let b = rc.datagen.as_ref().ok_or_else(missing)?;
            b.validate()?;
            runners::datagen::run(b, seed, out)
        }
        Command::Federation => {
            let b = rc.federation.as_ref().ok_or_else(missing)?;
            b.validate()?;
            runners::federation::run(b, seed, out)
        }
        Command::Suite => {
            let b = rc.suite.as_ref().ok_or_else(missing)?;
            b.validate()?;
            run_suite(b, inv, out)
        }
    }
}

fn report(inv: &Invocation, m: &RunManifest) {
    if inv.quiet {
        return;
    }
    for a in &m.assertions {
        println!("[{}] {}: {}", if a.passed { "PASS" } else { "FAIL" }, a.name, a.detail);
    }
    println!("{} {} -> {} ({:?})", m.command, m.experiment, m.out_dir, m.status);
}

/// Run one subcommand end to end and return its exit status.
///
/// The manifest is written whenever an output directory can be determined,
/// including after config and runtime errors.
pub fn execute(inv: &Invocation) -> i32 {
    let started_at = now();
    let loaded = match &inv.config {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    };
    let configured_out = loaded.as_ref().ok().and_then(|c| c.out.clone());
    let mut manifest = RunManifest {
        command: inv.command.name().to_string(),
        experiment: inv.command.name().to_string(),
        config_hash: String::new(),
        code_version: code_version(),
        seed: inv.seed,
        out_dir: String::new(),
        started_at,
        finished_at: String::new(),
        outputs: Vec::new(),
        assertions: Vec::new(),
        status: Status::ConfigError,
        exit_code: EXIT_CONFIG,
        error: None,
    };

    let rc = match loaded.and_then(|c| c.resolve(inv.command, inv.seed)) {
        Ok(rc) => rc,
        Err(e) => {
            eprintln!("error: {e}");
            let dir = out_dir(inv, configured_out.as_deref(), inv.command.name());
            manifest.out_dir = dir.display().to_string();
            manifest.error = Some(e.to_string());
            manifest.finished_at = now();
            if let Err(w) = write_manifest(&dir, &manifest) {
                eprintln!("error: cannot write manifest: {w}");
            }
            return EXIT_CONFIG;
        }
    };
    let dir = out_dir(inv, rc.out.as_deref(), &rc.experiment);
    let text = rc.to_toml();
    manifest.experiment = rc.experiment.clone();
    manifest.config_hash = sha256_hex(text.as_bytes());
    manifest.seed = Some(rc.seed);
    manifest.out_dir = dir.display().to_string();

    let mut outputs = Vec::new();
    let result = Artifacts::create(&dir).and_then(|mut art| {
        let r = art
            .text(RESOLVED_CONFIG, &text)
            .and_then(|_| dispatch(&rc, inv, &mut art));
        outputs = art.outputs().to_vec();
        r
    });
    let code = match result {
        Ok(assertions) => {
            let ok = assertions.iter().all(|a| a.passed);
            manifest.assertions = assertions;
            manifest.status = if ok { Status::Pass } else { Status::Fail };
            if ok {
                EXIT_OK
            } else {
                EXIT_FAIL
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            manifest.error = Some(format!("{e:#}"));
            if e.downcast_ref::<ConfigError>().is_some() {
                manifest.status = Status::ConfigError;
                EXIT_CONFIG
            } else {
                manifest.status = Status::RuntimeError;
                EXIT_FAIL
            }
        }
    };
    manifest.exit_code = code;
    manifest.outputs = output_entries(&dir, &outputs);
    manifest.finished_at = now();
    if let Err(w) = write_manifest(&dir, &manifest) {
        eprintln!("error: cannot write manifest: {w}");
    }
    report(inv, &manifest);
    code
}
