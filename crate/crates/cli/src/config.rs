use std::fmt;
use std::path::{Path, PathBuf};

use manifold_lab::nncore::{Activation, Network};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Fixedpoint,
    Covers,
    Boundary,
    Stochastic,
    Plasticity,
    Datagen,
    Federation,
    Suite,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Fixedpoint => "fixedpoint",
            Command::Covers => "covers",
            Command::Boundary => "boundary",
            Command::Stochastic => "stochastic",
            Command::Plasticity => "plasticity",
            Command::Datagen => "datagen",
            Command::Federation => "federation",
            Command::Suite => "suite",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Top-level run configuration; one block per module.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub experiment: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixedpoint: Option<FixedPointBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covers: Option<CoversBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary: Option<BoundaryBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stochastic: Option<StochasticBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plasticity: Option<PlasticityBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub datagen: Option<DatagenBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub federation: Option<FederationBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suite: Option<SuiteBlock>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text).map_err(|message| ConfigError::Parse {
            path: path.to_path_buf(),
            message,
        })
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.message().to_string())
    }

    /// Keep only the block `cmd` reads, filled with defaults, and apply the seed override.
    pub fn resolve(self, cmd: Command, seed: Option<u64>) -> Result<Self, ConfigError> {
        let experiment = if self.experiment.is_empty() {
            cmd.name().to_string()
        } else {
            self.experiment
        };
        if experiment.contains(['/', '\\']) || experiment == "." || experiment == ".." {
            return Err(invalid(format!("experiment name {experiment:?} is not a plain name")));
        }
        let mut out = RunConfig {
            experiment,
            seed: seed.unwrap_or(self.seed),
            out: self.out,
            ..RunConfig::default()
        };
        match cmd {
            Command::Fixedpoint => out.fixedpoint = Some(self.fixedpoint.unwrap_or_default()),
            Command::Covers => out.covers = Some(self.covers.unwrap_or_default()),
            Command::Boundary => out.boundary = Some(self.boundary.unwrap_or_default()),
            Command::Stochastic => out.stochastic = Some(self.stochastic.unwrap_or_default()),
            Command::Plasticity => out.plasticity = Some(self.plasticity.unwrap_or_default()),
            Command::Datagen => out.datagen = Some(self.datagen.unwrap_or_default()),
            Command::Federation => out.federation = Some(self.federation.unwrap_or_default()),
            Command::Suite => out.suite = Some(self.suite.unwrap_or_default()),
        }
        Ok(out)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

fn one() -> f64 {
    1.0
}

/// Layer widths, activations, and optionally explicit parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetSpec {
    pub dims: Vec<usize>,
    pub activations: Vec<Activation>,
    #[serde(default = "one")]
    pub weight_scale: f64,
    /// Replaces the seeded draw when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<Vec<f64>>,
}

impl NetSpec {
    pub fn new(dims: &[usize], activations: &[Activation], weight_scale: f64) -> Self {
        Self {
            dims: dims.to_vec(),
            activations: activations.to_vec(),
            weight_scale,
            params: None,
        }
    }

    pub fn build(&self, seed: u64) -> Result<Network<f64>, ConfigError> {
        if !(self.weight_scale >= 0.0) {
            return Err(invalid("net.weight_scale must be non-negative"));
        }
        let net = Network::random(&self.dims, &self.activations, self.weight_scale, seed)
            .map_err(|e| invalid(format!("net: {e}")))?;
        match &self.params {
            Some(p) => net.with_params(p).map_err(|e| invalid(format!("net.params: {e}"))),
            None => Ok(net),
        }
    }
}

fn positive(name: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be positive and finite")))
    }
}

fn non_negative(name: &str, v: f64) -> Result<(), ConfigError> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be non-negative and finite")))
    }
}

fn nonzero(name: &str, v: usize) -> Result<(), ConfigError> {
    if v > 0 {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be at least 1")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub points_per_axis: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            lo: -2.0,
            hi: 2.0,
            points_per_axis: 9,
        }
    }
}

impl GridSpec {
    /// Cartesian grid over `[lo, hi]^dim`, endpoints included.
    pub fn points(&self, dim: usize) -> Vec<Vec<f64>> {
        let n = self.points_per_axis;
        let axis: Vec<f64> = (0..n)
            .map(|i| {
                if n == 1 {
                    0.5 * (self.lo + self.hi)
                } else {
                    self.lo + (self.hi - self.lo) * i as f64 / (n - 1) as f64
                }
            })
            .collect();
        let mut out = vec![Vec::new()];
        for _ in 0..dim {
            out = out
                .into_iter()
                .flat_map(|p| {
                    axis.iter().map(move |&v| {
                        let mut q = p.clone();
                        q.push(v);
                        q
                    })
                })
                .collect();
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResidualTrainBlock {
    pub data_points: usize,
    pub steps: usize,
    pub lr: f64,
}

impl Default for ResidualTrainBlock {
    fn default() -> Self {
        Self {
            data_points: 20,
            steps: 2000,
            lr: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LagrangianBlock {
    /// Budget `c` as a fraction of the initial `‖θ‖²`.
    pub budget_fraction: f64,
    pub steps: usize,
    pub lr_theta: f64,
    pub lr_lambda: f64,
    pub tol: f64,
    /// Assert `|g|/c` below this at the end.
    pub max_violation: f64,
}

impl Default for LagrangianBlock {
    fn default() -> Self {
        Self {
            budget_fraction: 0.5,
            steps: 200_000,
            lr_theta: 0.02,
            lr_lambda: 0.05,
            tol: 1e-7,
            max_violation: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixedPointBlock {
    pub net: NetSpec,
    pub grid: GridSpec,
    pub max_t: usize,
    pub tol: f64,
    /// Residual bound on reported points, as a multiple of `tol`.
    pub residual_factor: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expect_points: Option<usize>,
    /// `ε` of the perturbation `f − ε f` at every found point.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accel_eps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train: Option<ResidualTrainBlock>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lagrangian: Option<LagrangianBlock>,
}

impl Default for FixedPointBlock {
    fn default() -> Self {
        Self {
            net: NetSpec {
                params: Some(vec![3.0, 0.0]),
                ..NetSpec::new(&[1, 1], &[Activation::Tanh], 1.0)
            },
            grid: GridSpec::default(),
            max_t: 10_000,
            tol: 1e-10,
            residual_factor: 10.0,
            expect_points: None,
            accel_eps: None,
            train: None,
            lagrangian: None,
        }
    }
}

impl FixedPointBlock {
    pub fn validate(&self) -> Result<(), ConfigError> {
        positive("fixedpoint.tol", self.tol)?;
        positive("fixedpoint.residual_factor", self.residual_factor)?;
        nonzero("fixedpoint.max_t", self.max_t)?;
        nonzero("fixedpoint.grid.points_per_axis", self.grid.points_per_axis)?;
        if !(self.grid.lo <= self.grid.hi) {
            return Err(invalid("fixedpoint.grid needs lo <= hi"));
        }
        if let Some(e) = self.accel_eps {
            non_negative("fixedpoint.accel_eps", e)?;
        }
        if let Some(t) = &self.train {
            nonzero("fixedpoint.train.data_points", t.data_points)?;
            positive("fixedpoint.train.lr", t.lr)?;
        }
        if let Some(l) = &self.lagrangian {
            positive("fixedpoint.lagrangian.budget_fraction", l.budget_fraction)?;
            positive("fixedpoint.lagrangian.lr_theta", l.lr_theta)?;
            positive("fixedpoint.lagrangian.lr_lambda", l.lr_lambda)?;
            positive("fixedpoint.lagrangian.tol", l.tol)?;
            positive("fixedpoint.lagrangian.max_violation", l.max_violation)?;
        }
        if self.net.dims.first() != self.net.dims.last() {
            return Err(invalid("fixedpoint.net must map a space to itself"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoversBlock {
    pub net: NetSpec,
    /// Function class tag of the regression target: L, P, H or D.
    pub target: String,
    pub data_points: usize,
    pub steps: usize,
    pub lr: f64,
    pub record_every: usize,
    pub tau: f64,
}

impl Default for CoversBlock {
    fn default() -> Self {
        Self {
            net: NetSpec::new(&[2, 8, 8, 1], &[Activation::Relu, Activation::Relu, Activation::Identity], 1.5),
            target: "H".into(),
            data_points: 128,
            steps: 200,
            lr: 0.05,
            record_every: 20,
            tau: 0.0,
        }
    }
}

pub fn class_tag(name: &str, value: &str) -> Result<char, ConfigError> {
    match value {
        "L" | "P" | "H" | "D" => Ok(value.chars().next().expect("non-empty")),
        _ => Err(invalid(format!("{name} must be one of L, P, H, D; got {value:?}"))),
    }
}

impl CoversBlock {
    pub fn validate(&self) -> Result<(), ConfigError> {
        class_tag("covers.target", &self.target)?;
        nonzero("covers.data_points", self.data_points)?;
        nonzero("covers.record_every", self.record_every)?;
        positive("covers.lr", self.lr)?;
        if !self.tau.is_finite() {
            return Err(invalid("covers.tau must be finite"));
        }
        if self.net.dims.last() != Some(&1) {
            return Err(invalid("covers.net must have one output"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundaryBlock {
    pub net: NetSpec,
    pub data_points: usize,
    pub pretrain_steps: usize,
    pub pretrain_lr: f64,
    pub sft_steps: usize,
    pub sft_lr: f64,
    pub weak_points: usize,
    pub weak_eps: f64,
    /// Output the weak rewards pull toward.
    pub weak_target: Vec<f64>,
    pub lambda: f64,
    pub perturb_steps: usize,
    pub perturb_lr: f64,
}

impl Default for BoundaryBlock {
    fn default() -> Self {
        Self {
            net: NetSpec::new(&[2, 8, 2], &[Activation::Tanh, Activation::Softmax], 1.0),
            data_points: 64,
            pretrain_steps: 300,
            pretrain_lr: 0.5,
            sft_steps: 100,
            sft_lr: 0.2,
            weak_points: 4,
            weak_eps: 0.5,
            weak_target: vec![0.9, 0.1],
            lambda: 5.0,
            perturb_steps: 200,
            perturb_lr: 0.05,
        }
    }
}

impl BoundaryBlock {
    pub fn validate(&self) -> Result<(), ConfigError> {
        nonzero("boundary.data_points", self.data_points)?;
        positive("boundary.pretrain_lr", self.pretrain_lr)?;
        positive("boundary.sft_lr", self.sft_lr)?;
        positive("boundary.perturb_lr", self.perturb_lr)?;
        non_negative("boundary.weak_eps", self.weak_eps)?;
        non_negative("boundary.lambda", self.lambda)?;
        nonzero("boundary.weak_points", self.weak_points)?;
        if self.weak_points > self.data_points {
            return Err(invalid("boundary.weak_points exceeds data_points"));
        }
        if self.net.dims.first() != Some(&2) || self.net.activations.last() != Some(&Activation::Softmax) {
            return Err(invalid("boundary.net needs 2 inputs and a softmax head"));
        }
        if self.net.dims.last().map(|&d| d < 2).unwrap_or(true) {
            return Err(invalid("boundary.net needs at least two classes"));
        }
        if Some(&self.weak_target.len()) != self.net.dims.last() {
            return Err(invalid("boundary.weak_target length must equal the output width"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StochasticBlock {
    pub net: NetSpec,
    /// Rescale a single linear layer to this spectral radius.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rescale_to_radius: Option<f64>,
    pub sigma: f64,
    pub depth: usize,
    pub n_runs: usize,
    pub pilot_runs: usize,
    pub burn_in: usize,
    pub n_draws: usize,
    pub union_specs: usize,
    pub union_samples: usize,
    pub chain_ratio_min: f64,
    pub plateau_gap: f64,
    pub std_rel_tol: f64,
}

impl Default for StochasticBlock {
    fn default() -> Self {
        Self {
            net: NetSpec {
                params: Some(vec![0.5, 0.2, 0.0, 0.25, 0.0, 0.0]),
                ..NetSpec::new(&[2, 2], &[Activation::Identity], 1.0)
            },
            rescale_to_radius: None,
            sigma: 0.1,
            depth: 50,
            n_runs: 4000,
            pilot_runs: 400,
            burn_in: 500,
            n_draws: 10_000,
            union_specs: 100,
            union_samples: 1000,
            chain_ratio_min: 2.0,
            plateau_gap: 0.2,
            std_rel_tol: 0.1,
        }
    }
}

impl StochasticBlock {
    pub fn validate(&self) -> Result<(), ConfigError> {
        non_negative("stochastic.sigma", self.sigma)?;
        if self.depth < 4 {
            return Err(invalid("stochastic.depth must be at least 4"));
        }
        nonzero("stochastic.n_runs", self.n_runs)?;
        nonzero("stochastic.pilot_runs", self.pilot_runs)?;
        if self.n_draws < 2 {
            return Err(invalid("stochastic.n_draws must be at least 2"));
        }
        nonzero("stochastic.union_samples", self.union_samples)?;
        positive("stochastic.chain_ratio_min", self.chain_ratio_min)?;
        positive("stochastic.plateau_gap", self.plateau_gap)?;
        positive("stochastic.std_rel_tol", self.std_rel_tol)?;
        if let Some(r) = self.rescale_to_radius {
            positive("stochastic.rescale_to_radius", r)?;
            if self.net.activations != [Activation::Identity] {
                return Err(invalid("stochastic.rescale_to_radius needs a single identity layer"));
            }
        }
        if self.net.dims.first() != self.net.dims.last() {
            return Err(invalid("stochastic.net must map a space to itself"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlasticityBlock {
    pub net: NetSpec,
    pub data_points: usize,
    pub steps: usize,
    pub lr: f64,
    pub checkpoint_every: usize,
    /// Trajectory state whose cloud is fitted; 0 is the input.
    pub layer: usize,
    pub components: usize,
    pub level: f64,
    pub c0: f64,
    pub samples_per_component: usize,
    pub band_fraction: f64,
    pub fd_tol: f64,
}

impl Default for PlasticityBlock {
    fn default() -> Self {
        Self {
            net: NetSpec::new(&[2, 8, 2], &[Activation::Tanh, Activation::Identity], 1.0),
            data_points: 200,
            steps: 400,
            lr: 0.05,
            checkpoint_every: 100,
            layer: 2,
            components: 2,
            level: 0.3,
            c0: 1.0,
            samples_per_component: 500,
            band_fraction: 0.05,
            fd_tol: 1e-4,
        }
    }
}

impl PlasticityBlock {
    pub fn validate(&self) -> Result<(), ConfigError> {
        nonzero("plasticity.data_points", self.data_points)?;
        nonzero("plasticity.checkpoint_every", self.checkpoint_every)?;
        nonzero("plasticity.components", self.components)?;
        nonzero("plasticity.samples_per_component", self.samples_per_component)?;
        positive("plasticity.lr", self.lr)?;
        positive("plasticity.c0", self.c0)?;
        positive("plasticity.fd_tol", self.fd_tol)?;
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(invalid("plasticity.level must lie in (0, 1)"));
        }
        if !(self.band_fraction > 0.0 && self.band_fraction < 1.0) {
            return Err(invalid("plasticity.band_fraction must lie in (0, 1)"));
        }
        if self.layer >= self.net.dims.len() {
            return Err(invalid("plasticity.layer exceeds the network depth"));
        }
        if self.net.dims.first() != Some(&2) || self.net.dims.last() != Some(&2) {
            return Err(invalid("plasticity.net must map 2 inputs to 2 outputs"));
        }
        if self.steps < self.checkpoint_every {
            return Err(invalid("plasticity.steps must cover at least one checkpoint interval"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatagenBlock {
    pub dim: usize,
    pub classes: Vec<String>,
    pub n: usize,
    pub fd_step: f64,
    pub grid: usize,
    pub jump_rel_tol: f64,
}

impl Default for DatagenBlock {
    fn default() -> Self {
        Self {
            dim: 2,
            classes: ["L", "P", "H", "D"].iter().map(|s| s.to_string()).collect(),
            n: 256,
            fd_step: 1e-4,
            grid: 16,
            jump_rel_tol: 0.05,
        }
    }
}

impl DatagenBlock {
    pub fn validate(&self) -> Result<(), ConfigError> {
        nonzero("datagen.dim", self.dim)?;
        nonzero("datagen.n", self.n)?;
        nonzero("datagen.grid", self.grid)?;
        positive("datagen.fd_step", self.fd_step)?;
        positive("datagen.jump_rel_tol", self.jump_rel_tol)?;
        let mut seen = Vec::new();
        for c in &self.classes {
            let t = class_tag("datagen.classes", c)?;
            if seen.contains(&t) {
                return Err(invalid(format!("datagen.classes lists {c} twice")));
            }
            seen.push(t);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperBlock {
    pub beta: f64,
    pub lambda: f64,
    pub eta: f64,
    pub damping: f64,
    pub init_jitter: f64,
    pub identity_metric: bool,
}

impl Default for HyperBlock {
    fn default() -> Self {
        Self {
            beta: 0.1,
            lambda: 0.5,
            eta: 0.002,
            damping: 1e-6,
            init_jitter: 0.3,
            identity_metric: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FederationBlock {
    pub clients: usize,
    pub rounds: usize,
    pub foundation: NetSpec,
    pub samples_per_client: usize,
    /// Every client trains on the same partition.
    pub shared_data: bool,
    pub hyper: HyperBlock,
    pub anchors: Vec<usize>,
    /// Assert the final equilibrium score is below the round-1 score.
    pub expect_alignment: bool,
}

impl Default for FederationBlock {
    fn default() -> Self {
        Self {
            clients: 3,
            rounds: 50,
            foundation: NetSpec::new(&[2, 8, 3], &[Activation::Tanh, Activation::Softmax], 1.0),
            samples_per_client: 32,
            shared_data: true,
            hyper: HyperBlock::default(),
            anchors: Vec::new(),
            expect_alignment: true,
        }
    }
}

impl FederationBlock {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.clients < 2 {
            return Err(invalid("federation.clients must be at least 2"));
        }
        nonzero("federation.rounds", self.rounds)?;
        nonzero("federation.samples_per_client", self.samples_per_client)?;
        positive("federation.hyper.eta", self.hyper.eta)?;
        positive("federation.hyper.damping", self.hyper.damping)?;
        non_negative("federation.hyper.beta", self.hyper.beta)?;
        non_negative("federation.hyper.lambda", self.hyper.lambda)?;
        non_negative("federation.hyper.init_jitter", self.hyper.init_jitter)?;
        if let Some(a) = self.anchors.iter().find(|&&a| a >= self.clients) {
            return Err(invalid(format!("federation.anchors: no client {a}")));
        }
        if self.foundation.dims.first() != Some(&2) || self.foundation.activations.last() != Some(&Activation::Softmax) {
            return Err(invalid("federation.foundation needs 2 inputs and a softmax head"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteMember {
    pub name: String,
    pub command: Command,
    /// Relative to the suite config's directory; defaults apply when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteBlock {
    pub members: Vec<SuiteMember>,
}

impl SuiteBlock {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut names: Vec<&str> = Vec::new();
        for m in &self.members {
            if m.name.is_empty() || m.name.contains(['/', '\\']) || m.name == "." || m.name == ".." {
                return Err(invalid(format!("suite member name {:?} is not a plain name", m.name)));
            }
            if names.contains(&m.name.as_str()) {
                return Err(invalid(format!("suite member {} declared twice", m.name)));
            }
            if m.command == Command::Suite {
                return Err(invalid(format!("suite member {} cannot itself be a suite", m.name)));
            }
            names.push(&m.name);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_key_is_named() {
        let err = RunConfig::parse("experiment = \"x\"\n[fixedpoint]\nmax_steps = 3\n").unwrap_err();
        assert!(err.contains("max_steps"), "{err}");
        let err = RunConfig::parse("colour = 1\n").unwrap_err();
        assert!(err.contains("colour"), "{err}");
    }

    #[test]
    fn resolved_config_round_trips() {
        for cmd in [
            Command::Fixedpoint,
            Command::Covers,
            Command::Boundary,
            Command::Stochastic,
            Command::Plasticity,
            Command::Datagen,
            Command::Federation,
            Command::Suite,
        ] {
            let rc = RunConfig::default().resolve(cmd, Some(4)).unwrap();
            assert_eq!(rc.experiment, cmd.name());
            let back = RunConfig::parse(&rc.to_toml()).unwrap();
            assert_eq!(back, rc);
        }
    }

    #[test]
    fn defaults_fill_missing_fields() {
        let rc = RunConfig::parse("[datagen]\nn = 10\n").unwrap().resolve(Command::Datagen, None).unwrap();
        let d = rc.datagen.unwrap();
        assert_eq!(d.n, 10);
        assert_eq!(d.grid, DatagenBlock::default().grid);
    }

    #[test]
    fn grid_is_cartesian() {
        let g = GridSpec {
            lo: 0.0,
            hi: 1.0,
            points_per_axis: 3,
        };
        let p = g.points(2);
        assert_eq!(p.len(), 9);
        assert_eq!(p[0], vec![0.0, 0.0]);
        assert_eq!(p[5], vec![0.5, 1.0]);
    }

    #[test]
    fn every_default_block_validates() {
        FixedPointBlock::default().validate().unwrap();
        CoversBlock::default().validate().unwrap();
        BoundaryBlock::default().validate().unwrap();
        StochasticBlock::default().validate().unwrap();
        PlasticityBlock::default().validate().unwrap();
        DatagenBlock::default().validate().unwrap();
        FederationBlock::default().validate().unwrap();
        SuiteBlock::default().validate().unwrap();
    }
}
