//! In-process federation of softmax classifiers coupled through KL to the
//! mixture of their peers, with a shared foundation prior and frozen anchors.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::nncore::scalar::norm;
use crate::nncore::{
    backprop, forward, loss_grad, loss_value, CrossEntropy, KlToTarget, Matrix, Network, NnError, Sample, Target,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FederationError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("need at least two clients, got {0}")]
    TooFewClients(usize),
    #[error("expected {expected} partitions, got {found}")]
    PartitionCount { expected: usize, found: usize },
    #[error("partition {0} is empty")]
    EmptyPartition(usize),
    #[error("foundation needs a softmax head")]
    NotSoftmax,
    #[error("client {0} is a frozen anchor")]
    AnchorUpdate(usize),
    #[error("client index {0} out of range")]
    InvalidIndex(usize),
    #[error("anchor {0} parameters changed")]
    AnchorTampered(usize),
    #[error("{0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    /// Weight of `KL(p_θ ‖ p_θ₀)`.
    pub beta: f64,
    /// Weight of `KL(p_θ ‖ q_{−i})`.
    pub lambda: f64,
    pub eta: f64,
    pub damping: f64,
    /// Std of the Gaussian offsets added to each client copy of the foundation.
    pub init_jitter: f64,
    /// Use `G = I` instead of the diagonal Fisher.
    pub identity_metric: bool,
}

impl Default for Hyper {
    fn default() -> Self {
        Self {
            beta: 0.1,
            lambda: 0.5,
            eta: 0.002,
            damping: 1e-6,
            init_jitter: 0.0,
            identity_metric: false,
        }
    }
}

pub const PROBE_COUNT: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FederationState {
    pub foundation: Network<f64>,
    pub clients: Vec<Network<f64>>,
    /// Row `i` weights peers `j ≠ i`; zero diagonal, rows sum to one.
    pub alpha: Vec<Vec<f64>>,
    pub anchors: BTreeSet<usize>,
    pub anchor_hashes: BTreeMap<usize, String>,
    pub hyper: Hyper,
    pub probe_set: Vec<Vec<f64>>,
    pub partitions: Vec<Vec<Sample<f64>>>,
    pub round: usize,
}

/// SHA-256 over the little-endian bytes of every parameter.
pub fn param_hash(net: &Network<f64>) -> String {
    let mut h = Sha256::new();
    for p in net.params() {
        h.update(p.to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn init_federation(
    foundation: &Network<f64>,
    k: usize,
    partitions: Vec<Vec<Sample<f64>>>,
    hyper: Hyper,
    seed: u64,
) -> Result<FederationState, FederationError> {
    if k < 2 {
        return Err(FederationError::TooFewClients(k));
    }
    if !foundation.has_softmax_head() {
        return Err(FederationError::NotSoftmax);
    }
    if partitions.len() != k {
        return Err(FederationError::PartitionCount {
            expected: k,
            found: partitions.len(),
        });
    }
    if let Some(i) = partitions.iter().position(Vec::is_empty) {
        return Err(FederationError::EmptyPartition(i));
    }
    if !(hyper.eta > 0.0) || !(hyper.damping > 0.0) || hyper.beta < 0.0 || hyper.lambda < 0.0 || hyper.init_jitter < 0.0 {
        return Err(FederationError::InvalidArgument(
            "need eta > 0, damping > 0 and non-negative beta, lambda, init_jitter".into(),
        ));
    }
    let theta0 = foundation.params();
    let clients = (0..k)
        .map(|i| {
            if hyper.init_jitter == 0.0 {
                return Ok(foundation.clone());
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1 + i as u64));
            let theta: Vec<f64> = theta0
                .iter()
                .map(|p| {
                    let z: f64 = rng.sample(StandardNormal);
                    p + hyper.init_jitter * z
                })
                .collect();
            foundation.with_params(&theta)
        })
        .collect::<Result<Vec<_>, NnError>>()?;
    let alpha = (0..k)
        .map(|i| (0..k).map(|j| if i == j { 0.0 } else { 1.0 / (k - 1) as f64 }).collect())
        .collect();
    let pooled: Vec<&Vec<f64>> = partitions.iter().flatten().map(|s| &s.input).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let probe_set = (0..PROBE_COUNT)
        .map(|_| pooled[rng.random_range(0..pooled.len())].clone())
        .collect();
    Ok(FederationState {
        foundation: foundation.clone(),
        clients,
        alpha,
        anchors: BTreeSet::new(),
        anchor_hashes: BTreeMap::new(),
        hyper,
        probe_set,
        partitions,
        round: 0,
    })
}

fn check_index(state: &FederationState, i: usize) -> Result<(), FederationError> {
    if i < state.clients.len() {
        Ok(())
    } else {
        Err(FederationError::InvalidIndex(i))
    }
}

fn mixture_of(alpha: &[f64], peers: &[Network<f64>], i: usize, x: &[f64]) -> Result<Vec<f64>, NnError> {
    let mut q: Option<Vec<f64>> = None;
    for (j, net) in peers.iter().enumerate() {
        if j == i || alpha[j] == 0.0 {
            continue;
        }
        let p = net.eval(x)?;
        let acc = q.get_or_insert_with(|| vec![0.0; p.len()]);
        for (a, b) in acc.iter_mut().zip(&p) {
            *a += alpha[j] * b;
        }
    }
    Ok(q.unwrap_or_else(|| peers[i].eval(x).expect("client evaluates")))
}

/// `q_{−i}(·|x) = Σ_{j≠i} α_ij p_{θ_j}(·|x)`.
pub fn mixture_reference(state: &FederationState, i: usize, x: &[f64]) -> Result<Vec<f64>, FederationError> {
    check_index(state, i)?;
    Ok(mixture_of(&state.alpha[i], &state.clients, i, x)?)
}

/// `Σ_y p_y ln(p_y / q_y)`.
pub fn kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, qi)| pi * (pi.ln() - qi.ln()))
        .sum()
}

/// Objective terms of one client.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveTerms {
    pub local: f64,
    pub prior_kl: f64,
    pub mixture_kl: f64,
    pub total: f64,
}

fn probe_targets(probes: &[Vec<f64>], reference: impl Fn(&[f64]) -> Result<Vec<f64>, NnError>) -> Result<Vec<Sample<f64>>, NnError> {
    probes
        .iter()
        .map(|x| Ok(Sample::distribution(x.clone(), reference(x)?)))
        .collect()
}

/// Value and gradient of `CE(batch) + β·KL(p_θ‖p_θ₀) + λ·KL(p_θ‖q_{−i})`,
/// with both KLs averaged over the probe set and `q_{−i}` taken from `peers`.
fn objective_grad(
    net: &Network<f64>,
    i: usize,
    batch: &[Sample<f64>],
    foundation: &Network<f64>,
    alpha: &[f64],
    peers: &[Network<f64>],
    probes: &[Vec<f64>],
    hyper: &Hyper,
) -> Result<(ObjectiveTerms, Vec<f64>), NnError> {
    let ce = loss_grad(net, &CrossEntropy, batch)?;
    let mut grad = ce.grad;
    let mut terms = ObjectiveTerms {
        local: ce.value,
        prior_kl: 0.0,
        mixture_kl: 0.0,
        total: ce.value,
    };
    if hyper.beta != 0.0 {
        let prior = probe_targets(probes, |x| foundation.eval(x))?;
        let lg = loss_grad(net, &KlToTarget, &prior)?;
        terms.prior_kl = lg.value;
        terms.total += hyper.beta * lg.value;
        grad.iter_mut().zip(&lg.grad).for_each(|(g, k)| *g += hyper.beta * k);
    }
    if hyper.lambda != 0.0 {
        let mix = probe_targets(probes, |x| mixture_of(alpha, peers, i, x))?;
        let lg = loss_grad(net, &KlToTarget, &mix)?;
        terms.mixture_kl = lg.value;
        terms.total += hyper.lambda * lg.value;
        grad.iter_mut().zip(&lg.grad).for_each(|(g, k)| *g += hyper.lambda * k);
    }
    Ok((terms, grad))
}

/// All three terms evaluated against the current peers, regardless of the weights.
pub fn client_objective_terms(
    state: &FederationState,
    i: usize,
    batch: &[Sample<f64>],
) -> Result<ObjectiveTerms, FederationError> {
    check_index(state, i)?;
    let net = &state.clients[i];
    let local = loss_value(net, &CrossEntropy, batch)?;
    let n = state.probe_set.len() as f64;
    let (mut prior_kl, mut mixture_kl) = (0.0, 0.0);
    for x in &state.probe_set {
        let p = net.eval(x)?;
        prior_kl += kl(&p, &state.foundation.eval(x)?) / n;
        mixture_kl += kl(&p, &mixture_reference(state, i, x)?) / n;
    }
    Ok(ObjectiveTerms {
        local,
        prior_kl,
        mixture_kl,
        total: local + state.hyper.beta * prior_kl + state.hyper.lambda * mixture_kl,
    })
}

pub fn client_objective(state: &FederationState, i: usize, batch: &[Sample<f64>]) -> Result<f64, FederationError> {
    Ok(client_objective_terms(state, i, batch)?.total)
}

pub fn client_objective_grad(
    state: &FederationState,
    i: usize,
    batch: &[Sample<f64>],
) -> Result<(ObjectiveTerms, Vec<f64>), FederationError> {
    check_index(state, i)?;
    Ok(objective_grad(
        &state.clients[i],
        i,
        batch,
        &state.foundation,
        &state.alpha[i],
        &state.clients,
        &state.probe_set,
        &state.hyper,
    )?)
}

fn scores(net: &Network<f64>, batch: &[Sample<f64>]) -> Result<Vec<Vec<f64>>, NnError> {
    batch
        .iter()
        .map(|s| {
            let Target::Class(y) = s.target else {
                return Err(NnError::TargetKind("class"));
            };
            let traj = forward(net, &s.input)?;
            let p = traj.output();
            if y >= p.len() {
                return Err(NnError::LabelOutOfRange {
                    label: y,
                    classes: p.len(),
                });
            }
            let mut g = vec![0.0; p.len()];
            g[y] = 1.0 / p[y];
            Ok(backprop(net, &traj, &g)?.params)
        })
        .collect()
}

/// Mean squared score `E[(∂ ln p_θ(y|x) / ∂θ)²]` per parameter.
pub fn diagonal_fisher(net: &Network<f64>, batch: &[Sample<f64>]) -> Result<Vec<f64>, FederationError> {
    if batch.is_empty() {
        return Err(NnError::EmptyBatch.into());
    }
    let s = scores(net, batch)?;
    let n = batch.len() as f64;
    Ok((0..net.num_params()).map(|k| s.iter().map(|v| v[k] * v[k]).sum::<f64>() / n).collect())
}

/// Mean outer product of the observed-label scores.
pub fn empirical_fisher(net: &Network<f64>, batch: &[Sample<f64>]) -> Result<Matrix<f64>, FederationError> {
    if batch.is_empty() {
        return Err(NnError::EmptyBatch.into());
    }
    let s = scores(net, batch)?;
    let m = net.num_params();
    let mut f = Matrix::zeros(m, m);
    for v in &s {
        for a in 0..m {
            for b in 0..m {
                f[(a, b)] += v[a] * v[b] / batch.len() as f64;
            }
        }
    }
    Ok(f)
}

/// `E_x Σ_y p_θ(y|x) s_y s_yᵀ`, the Fisher under the model's own predictive distribution.
pub fn model_fisher(net: &Network<f64>, inputs: &[Vec<f64>]) -> Result<Matrix<f64>, FederationError> {
    if inputs.is_empty() {
        return Err(NnError::EmptyBatch.into());
    }
    let m = net.num_params();
    let mut f: Matrix<f64> = Matrix::zeros(m, m);
    for x in inputs {
        let p = net.eval(x)?;
        let labeled: Vec<Sample<f64>> = (0..p.len()).map(|y| Sample::class(x.clone(), y)).collect();
        let s = scores(net, &labeled)?;
        for (y, v) in s.iter().enumerate() {
            for a in 0..m {
                for b in 0..m {
                    f[(a, b)] += p[y] * v[a] * v[b] / inputs.len() as f64;
                }
            }
        }
    }
    Ok(f)
}

fn preconditioned(net: &Network<f64>, grad: &[f64], batch: &[Sample<f64>], hyper: &Hyper) -> Result<Vec<f64>, FederationError> {
    let g = if hyper.identity_metric {
        vec![1.0; grad.len()]
    } else {
        diagonal_fisher(net, batch)?.iter().map(|f| f + hyper.damping).collect()
    };
    Ok(net
        .params()
        .iter()
        .zip(grad)
        .zip(&g)
        .map(|((p, d), gi)| p - hyper.eta * d / gi)
        .collect())
}

/// `θ_i ← θ_i − η Ĝ⁻¹ ∇L_i`, with `Ĝ` the damped diagonal empirical Fisher on `batch`.
pub fn natural_gradient_step(
    state: &FederationState,
    i: usize,
    batch: &[Sample<f64>],
) -> Result<Network<f64>, FederationError> {
    check_index(state, i)?;
    if state.anchors.contains(&i) {
        return Err(FederationError::AnchorUpdate(i));
    }
    let (_, grad) = client_objective_grad(state, i, batch)?;
    let theta = preconditioned(&state.clients[i], &grad, batch, &state.hyper)?;
    Ok(state.clients[i].with_params(&theta)?)
}

/// Delivers round-start parameters to every client.
pub trait PeerTransport {
    fn publish(&mut self, round: usize, client: usize, net: &Network<f64>);

    /// All clients' published parameters for `round`, indexed by client.
    fn collect(&self, round: usize) -> Vec<Network<f64>>;
}

/// Shared-memory mailbox; one slot per client per round.
#[derive(Debug, Default)]
pub struct InProcessTransport {
    round: usize,
    slots: BTreeMap<usize, Network<f64>>,
}

impl PeerTransport for InProcessTransport {
    fn publish(&mut self, round: usize, client: usize, net: &Network<f64>) {
        if round != self.round {
            self.round = round;
            self.slots.clear();
        }
        self.slots.insert(client, net.clone());
    }

    fn collect(&self, round: usize) -> Vec<Network<f64>> {
        assert_eq!(round, self.round, "no messages for round {round}");
        self.slots.values().cloned().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientMetrics {
    pub local_loss: f64,
    pub kl_mixture: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: usize,
    pub clients: Vec<ClientMetrics>,
    pub pairwise: Matrix<f64>,
    pub equilibrium_score: f64,
}

/// One synchronized round with the default transport and client order.
pub fn run_round(state: &FederationState) -> Result<(FederationState, RoundMetrics), FederationError> {
    let order: Vec<usize> = (0..state.clients.len()).collect();
    run_round_with(state, &mut InProcessTransport::default(), &order)
}

/// Every client steps against the round-start snapshot delivered by `transport`;
/// updates are committed together after all are computed.
pub fn run_round_with(
    state: &FederationState,
    transport: &mut dyn PeerTransport,
    order: &[usize],
) -> Result<(FederationState, RoundMetrics), FederationError> {
    let k = state.clients.len();
    let mut seen: Vec<usize> = order.to_vec();
    seen.sort_unstable();
    if seen != (0..k).collect::<Vec<_>>() {
        return Err(FederationError::InvalidArgument("order must be a permutation of the clients".into()));
    }
    for (i, net) in state.clients.iter().enumerate() {
        transport.publish(state.round, i, net);
    }
    let snapshot = transport.collect(state.round);
    let mut updates: BTreeMap<usize, Network<f64>> = BTreeMap::new();
    for &i in order {
        if state.anchors.contains(&i) {
            continue;
        }
        let batch = &state.partitions[i];
        let (_, grad) = objective_grad(
            &snapshot[i],
            i,
            batch,
            &state.foundation,
            &state.alpha[i],
            &snapshot,
            &state.probe_set,
            &state.hyper,
        )?;
        let theta = preconditioned(&snapshot[i], &grad, batch, &state.hyper)?;
        updates.insert(i, snapshot[i].with_params(&theta)?);
    }
    let mut next = state.clone();
    for (i, net) in updates {
        next.clients[i] = net;
    }
    next.round += 1;
    for (&i, h) in &next.anchor_hashes {
        if &param_hash(&next.clients[i]) != h {
            return Err(FederationError::AnchorTampered(i));
        }
    }
    let metrics = round_metrics(&next)?;
    Ok((next, metrics))
}

pub fn round_metrics(state: &FederationState) -> Result<RoundMetrics, FederationError> {
    let clients = (0..state.clients.len())
        .map(|i| {
            let (terms, grad) = client_objective_grad(state, i, &state.partitions[i])?;
            let kl_mixture = client_objective_terms(state, i, &state.partitions[i])?.mixture_kl;
            Ok(ClientMetrics {
                local_loss: terms.local,
                kl_mixture,
                grad_norm: norm(&grad),
            })
        })
        .collect::<Result<Vec<_>, FederationError>>()?;
    let (pairwise, equilibrium_score) = equilibrium_metric(state)?;
    Ok(RoundMetrics {
        round: state.round,
        clients,
        pairwise,
        equilibrium_score,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointCheck {
    /// `None` for anchors.
    pub grad_norms: Vec<Option<f64>>,
    pub converged: bool,
}

/// `‖∇_{θ_i} L_i‖` for every non-anchor client on its own partition.
pub fn fixed_point_check(state: &FederationState, tol: f64) -> Result<FixedPointCheck, FederationError> {
    let grad_norms = (0..state.clients.len())
        .map(|i| {
            if state.anchors.contains(&i) {
                return Ok(None);
            }
            let (_, g) = client_objective_grad(state, i, &state.partitions[i])?;
            Ok(Some(norm(&g)))
        })
        .collect::<Result<Vec<_>, FederationError>>()?;
    let converged = grad_norms.iter().flatten().all(|n| *n < tol);
    Ok(FixedPointCheck { grad_norms, converged })
}

/// Mark `anchors` frozen and record their parameter hashes.
pub fn freeze_anchors(state: &FederationState, anchors: &BTreeSet<usize>) -> Result<FederationState, FederationError> {
    if let Some(&i) = anchors.iter().find(|&&i| i >= state.clients.len()) {
        return Err(FederationError::InvalidIndex(i));
    }
    let mut next = state.clone();
    next.anchors = anchors.clone();
    next.anchor_hashes = anchors.iter().map(|&i| (i, param_hash(&state.clients[i]))).collect();
    Ok(next)
}

/// `M[i][j] = ½(KL(p_i‖p_j) + KL(p_j‖p_i))` averaged over probes; score is the off-diagonal mean.
pub fn equilibrium_metric(state: &FederationState) -> Result<(Matrix<f64>, f64), FederationError> {
    if state.probe_set.is_empty() {
        return Err(NnError::EmptyBatch.into());
    }
    let outputs: Vec<Vec<Vec<f64>>> = state
        .clients
        .iter()
        .map(|c| state.probe_set.iter().map(|x| c.eval(x)).collect())
        .collect::<Result<_, NnError>>()?;
    Ok(symmetric_kl_matrix(&outputs))
}

/// `outputs[i][probe]` are the predictive distributions of client `i`.
pub fn symmetric_kl_matrix(outputs: &[Vec<Vec<f64>>]) -> (Matrix<f64>, f64) {
    let k = outputs.len();
    let mut m = Matrix::zeros(k, k);
    let mut total = 0.0;
    for i in 0..k {
        for j in i + 1..k {
            let n = outputs[i].len() as f64;
            let v = outputs[i]
                .iter()
                .zip(&outputs[j])
                .map(|(p, q)| 0.5 * (kl(p, q) + kl(q, p)))
                .sum::<f64>()
                / n;
            m[(i, j)] = v;
            m[(j, i)] = v;
            total += 2.0 * v;
        }
    }
    let score = if k > 1 { total / (k * (k - 1)) as f64 } else { 0.0 };
    (m, score)
}

/// Train client `i` alone, as if it had no peers: same steps with `λ = 0`.
pub fn independent_run(state: &FederationState, i: usize, rounds: usize) -> Result<Network<f64>, FederationError> {
    check_index(state, i)?;
    let hyper = Hyper {
        lambda: 0.0,
        ..state.hyper
    };
    let batch = &state.partitions[i];
    let mut net = state.clients[i].clone();
    for _ in 0..rounds {
        let (_, grad) = objective_grad(&net, i, batch, &state.foundation, &state.alpha[i], &state.clients, &state.probe_set, &hyper)?;
        let theta = preconditioned(&net, &grad, batch, &hyper)?;
        net = net.with_params(&theta)?;
    }
    Ok(net)
}

/// One CSV row per client per round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FederationRow {
    pub round: usize,
    pub client: usize,
    pub local_loss: f64,
    pub kl_mixture: f64,
    pub grad_norm: f64,
    pub equilibrium_score: f64,
}

impl RoundMetrics {
    pub fn rows(&self) -> Vec<FederationRow> {
        self.clients
            .iter()
            .enumerate()
            .map(|(c, m)| FederationRow {
                round: self.round,
                client: c,
                local_loss: m.local_loss,
                kl_mixture: m.kl_mixture,
                grad_norm: m.grad_norm,
                equilibrium_score: self.equilibrium_score,
            })
            .collect()
    }
}
