//! Boundary-conditioned training: statistical pretraining, supervised shaping,
//! weak reward perturbation, the blended objective and the contrastive pair loss.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::nncore::fd::{gradient, DEFAULT_STEP};
use crate::nncore::{
    backprop, forward, loss_grad, loss_value, CrossEntropy, LossGrad, Network, NnError,
    OutputLoss, Sample, SquaredError, Target,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BoundaryError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("invalid boundary weights alpha={alpha}, beta={beta}")]
    InvalidWeights { alpha: f64, beta: f64 },
    #[error("non-finite reward at boundary point {0}")]
    NonFiniteReward(usize),
    #[error("contrastive loss needs at least one negative")]
    EmptyNegatives,
    #[error("network needs a softmax head")]
    NotSoftmax,
    #[error("{0}")]
    InvalidArgument(String),
}

/// `α`, `β` and the implied supervised weight `1 − α − β`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryWeights {
    alpha: f64,
    beta: f64,
}

impl BoundaryWeights {
    pub fn new(alpha: f64, beta: f64) -> Result<Self, BoundaryError> {
        let ok = alpha >= 0.0 && beta >= 0.0 && alpha + beta <= 1.0 + 1e-12;
        if !ok || !alpha.is_finite() || !beta.is_finite() {
            return Err(BoundaryError::InvalidWeights { alpha, beta });
        }
        Ok(Self { alpha, beta })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn supervised(&self) -> f64 {
        (1.0 - self.alpha - self.beta).max(0.0)
    }
}

/// Squared error for vector targets, cross-entropy for class targets.
#[derive(Debug, Clone, Copy, Default)]
pub struct Supervised;

impl OutputLoss<f64> for Supervised {
    fn eval(&self, sample: &Sample<f64>, output: &[f64]) -> Result<(f64, Vec<f64>), NnError> {
        match sample.target {
            Target::Class(_) => CrossEntropy.eval(sample, output),
            _ => SquaredError.eval(sample, output),
        }
    }
}

type RewardFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// Reward on a model output.
#[derive(Clone)]
pub enum Reward {
    /// `−‖h − target‖²`, differentiated analytically.
    NegSqDist(Vec<f64>),
    /// Black box, differentiated by central differences.
    Custom(Arc<RewardFn>),
}

impl fmt::Debug for Reward {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Reward::NegSqDist(t) => f.debug_tuple("NegSqDist").field(t).finish(),
            Reward::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl Reward {
    pub fn custom(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Reward::Custom(Arc::new(f))
    }

    pub fn value(&self, h: &[f64]) -> f64 {
        match self {
            Reward::NegSqDist(t) => -h.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(),
            Reward::Custom(f) => f(h),
        }
    }

    pub fn output_grad(&self, h: &[f64]) -> Result<Vec<f64>, NnError> {
        match self {
            Reward::NegSqDist(t) => {
                if t.len() != h.len() {
                    return Err(NnError::DimensionMismatch {
                        expected: h.len(),
                        found: t.len(),
                    });
                }
                Ok(h.iter().zip(t).map(|(a, b)| -2.0 * (a - b)).collect())
            }
            Reward::Custom(f) => gradient(|x| Ok(f(x)), h, DEFAULT_STEP),
        }
    }
}

#[derive(Debug, Clone)]
pub struct WeakPoint {
    pub input: Vec<f64>,
    pub eps: f64,
    pub reward: Reward,
}

/// Sparse weighted reward probes `{(x_j, ε_j, r_j)}`.
#[derive(Debug, Clone, Default)]
pub struct WeakBoundarySet {
    pub points: Vec<WeakPoint>,
}

impl WeakBoundarySet {
    pub fn new(points: Vec<WeakPoint>) -> Result<Self, BoundaryError> {
        if let Some(j) = points.iter().position(|p| !(p.eps >= 0.0) || !p.eps.is_finite()) {
            return Err(BoundaryError::InvalidArgument(format!(
                "boundary weight {j} must be finite and non-negative"
            )));
        }
        Ok(Self { points })
    }

    pub fn total_weight(&self) -> f64 {
        self.points.iter().map(|p| p.eps).sum()
    }

    /// Same points with every weight multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let points = self
            .points
            .iter()
            .map(|p| WeakPoint {
                eps: p.eps * c,
                ..p.clone()
            })
            .collect();
        Self { points }
    }
}

/// Per-point and total rewards `B(θ) = Σ ε_j r_j(Φ_θ(x_j))`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeakBoundaryEval {
    pub value: f64,
    pub rewards: Vec<f64>,
}

pub fn weak_boundary_eval(net: &Network<f64>, wb: &WeakBoundarySet) -> Result<WeakBoundaryEval, BoundaryError> {
    let mut value = 0.0;
    let mut rewards = Vec::with_capacity(wb.points.len());
    for (j, p) in wb.points.iter().enumerate() {
        let r = p.reward.value(&net.eval(&p.input)?);
        if !r.is_finite() {
            return Err(BoundaryError::NonFiniteReward(j));
        }
        value += p.eps * r;
        rewards.push(r);
    }
    Ok(WeakBoundaryEval { value, rewards })
}

pub fn weak_boundary_value(net: &Network<f64>, wb: &WeakBoundarySet) -> Result<f64, BoundaryError> {
    weak_boundary_eval(net, wb).map(|e| e.value)
}

/// `B(θ)` and `∇_θ B`.
pub fn weak_boundary_grad(net: &Network<f64>, wb: &WeakBoundarySet) -> Result<LossGrad<f64>, BoundaryError> {
    let mut value = 0.0;
    let mut grad = vec![0.0; net.num_params()];
    for (j, p) in wb.points.iter().enumerate() {
        let traj = forward(net, &p.input)?;
        let r = p.reward.value(traj.output());
        if !r.is_finite() {
            return Err(BoundaryError::NonFiniteReward(j));
        }
        value += p.eps * r;
        let g_out = p.reward.output_grad(traj.output())?;
        let back = backprop(net, &traj, &g_out)?;
        for (a, b) in grad.iter_mut().zip(back.params) {
            *a += p.eps * b;
        }
    }
    Ok(LossGrad { value, grad })
}

fn step(net: &mut Network<f64>, grad: &[f64], lr: f64) -> Result<(), NnError> {
    let theta: Vec<f64> = net
        .params()
        .iter()
        .zip(grad)
        .map(|(&p, &g)| p - lr * g)
        .collect();
    net.set_params(&theta)
}

/// Cross-entropy, empirical conditional entropy, and `KL(p_data ‖ q_θ)` summed directly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlBreakdown {
    pub cross_entropy: f64,
    pub entropy: f64,
    pub kl: f64,
}

impl KlBreakdown {
    pub fn kl_via_entropy(&self) -> f64 {
        self.cross_entropy - self.entropy
    }
}

fn input_key(x: &[f64]) -> Vec<u64> {
    x.iter().map(|v| v.to_bits()).collect()
}

/// Samples with bit-identical inputs form one empirical conditional `p_data(·|x)`.
pub fn pretrain_kl(net: &Network<f64>, data: &[Sample<f64>]) -> Result<KlBreakdown, BoundaryError> {
    if data.is_empty() {
        return Err(NnError::EmptyBatch.into());
    }
    let mut groups: BTreeMap<Vec<u64>, (usize, BTreeMap<usize, usize>)> = BTreeMap::new();
    for (i, s) in data.iter().enumerate() {
        let Target::Class(y) = s.target else {
            return Err(NnError::TargetKind("class").into());
        };
        let e = groups.entry(input_key(&s.input)).or_insert((i, BTreeMap::new()));
        *e.1.entry(y).or_insert(0) += 1;
    }
    let n = data.len() as f64;
    let cross_entropy = loss_value(net, &CrossEntropy, data)?;
    let (mut entropy, mut kl) = (0.0, 0.0);
    for (first, counts) in groups.values() {
        let q = net.eval(&data[*first].input)?;
        let group: usize = counts.values().sum();
        for (&y, &c) in counts {
            if y >= q.len() {
                return Err(NnError::LabelOutOfRange {
                    label: y,
                    classes: q.len(),
                }
                .into());
            }
            let p = c as f64 / group as f64;
            entropy -= c as f64 / n * p.ln();
            kl += c as f64 / n * (p.ln() - q[y].ln());
        }
    }
    Ok(KlBreakdown {
        cross_entropy,
        entropy,
        kl,
    })
}

#[derive(Debug, Clone)]
pub struct PretrainRun {
    pub net: Network<f64>,
    /// Cross-entropy before each step and after the last.
    pub loss_curve: Vec<f64>,
    pub kl_curve: Vec<KlBreakdown>,
}

fn require_classes(net: &Network<f64>, data: &[Sample<f64>]) -> Result<(), BoundaryError> {
    if !net.has_softmax_head() {
        return Err(BoundaryError::NotSoftmax);
    }
    for s in data {
        match s.target {
            Target::Class(y) if y < net.output_dim() => {}
            Target::Class(y) => {
                return Err(NnError::LabelOutOfRange {
                    label: y,
                    classes: net.output_dim(),
                }
                .into())
            }
            _ => return Err(NnError::TargetKind("class").into()),
        }
    }
    Ok(())
}

/// Cross-entropy descent on labeled data.
pub fn stage0_pretrain(
    net: &Network<f64>,
    data: &[Sample<f64>],
    steps: usize,
    lr: f64,
) -> Result<PretrainRun, BoundaryError> {
    require_classes(net, data)?;
    let mut net = net.clone();
    let mut loss_curve = Vec::with_capacity(steps + 1);
    let mut kl_curve = Vec::with_capacity(steps + 1);
    for _ in 0..steps {
        kl_curve.push(pretrain_kl(&net, data)?);
        let lg = loss_grad(&net, &CrossEntropy, data)?;
        loss_curve.push(lg.value);
        step(&mut net, &lg.grad, lr)?;
    }
    kl_curve.push(pretrain_kl(&net, data)?);
    loss_curve.push(loss_value(&net, &CrossEntropy, data)?);
    Ok(PretrainRun {
        net,
        loss_curve,
        kl_curve,
    })
}

fn check_pairs(net: &Network<f64>, pairs: &[Sample<f64>]) -> Result<(), BoundaryError> {
    if pairs.is_empty() {
        return Err(NnError::EmptyBatch.into());
    }
    for s in pairs {
        match &s.target {
            Target::Vector(y) if y.len() != net.output_dim() => {
                return Err(NnError::DimensionMismatch {
                    expected: net.output_dim(),
                    found: y.len(),
                }
                .into())
            }
            Target::Vector(_) => {}
            Target::Class(_) => require_classes(net, std::slice::from_ref(s))?,
            _ => return Err(NnError::TargetKind("vector or class").into()),
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct SftRun {
    pub net: Network<f64>,
    pub loss_curve: Vec<f64>,
}

/// Supervised descent on `pairs`.
pub fn stage1_sft(
    net: &Network<f64>,
    pairs: &[Sample<f64>],
    steps: usize,
    lr: f64,
) -> Result<SftRun, BoundaryError> {
    check_pairs(net, pairs)?;
    let mut net = net.clone();
    let mut loss_curve = Vec::with_capacity(steps + 1);
    for _ in 0..steps {
        let lg = loss_grad(&net, &Supervised, pairs)?;
        loss_curve.push(lg.value);
        step(&mut net, &lg.grad, lr)?;
    }
    loss_curve.push(loss_value(&net, &Supervised, pairs)?);
    Ok(SftRun { net, loss_curve })
}

#[derive(Debug, Clone)]
pub struct PerturbedRun {
    pub net: Network<f64>,
    pub base_curve: Vec<f64>,
    pub boundary_curve: Vec<f64>,
    /// Steps at which `λ·Σ ε_j |r_j|` exceeded a tenth of the base loss.
    pub weakness_warnings: Vec<usize>,
}

/// Descent on the supervised loss while climbing the weak reward: `θ ← θ − η(∇L − λ∇B)`.
pub fn stage2_perturbed(
    net: &Network<f64>,
    pairs: &[Sample<f64>],
    wb: &WeakBoundarySet,
    lambda: f64,
    steps: usize,
    lr: f64,
) -> Result<PerturbedRun, BoundaryError> {
    if !(lambda >= 0.0) {
        return Err(BoundaryError::InvalidArgument("lambda must be non-negative".into()));
    }
    check_pairs(net, pairs)?;
    let mut net = net.clone();
    let mut base_curve = Vec::with_capacity(steps + 1);
    let mut boundary_curve = Vec::with_capacity(steps + 1);
    let mut weakness_warnings = Vec::new();
    for t in 0..=steps {
        let lg = loss_grad(&net, &Supervised, pairs)?;
        let eval = weak_boundary_eval(&net, wb)?;
        base_curve.push(lg.value);
        boundary_curve.push(eval.value);
        let magnitude: f64 = wb
            .points
            .iter()
            .zip(&eval.rewards)
            .map(|(p, r)| p.eps * r.abs())
            .sum();
        if lambda * magnitude > 0.1 * lg.value {
            weakness_warnings.push(t);
        }
        if t == steps {
            break;
        }
        let gb = weak_boundary_grad(&net, wb)?;
        let combined: Vec<f64> = lg
            .grad
            .iter()
            .zip(&gb.grad)
            .map(|(&l, &b)| l - lambda * b)
            .collect();
        step(&mut net, &combined, lr)?;
    }
    Ok(PerturbedRun {
        net,
        base_curve,
        boundary_curve,
        weakness_warnings,
    })
}

/// Squared distance of the output on a probe to the intended output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentionCost {
    pub probe: Vec<f64>,
    pub target: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnifiedTerms {
    pub statistical: f64,
    pub intention: f64,
    pub supervised: f64,
    pub total: f64,
}

/// `α·CE(pretrain) + β·C(Φ(p)) + (1 − α − β)·ℓ(supervised)` and its gradient.
pub fn unified_loss_grad(
    net: &Network<f64>,
    pretrain: &[Sample<f64>],
    weights: BoundaryWeights,
    intention: &IntentionCost,
    supervised: &[Sample<f64>],
) -> Result<(UnifiedTerms, Vec<f64>), BoundaryError> {
    let stat = loss_grad(net, &CrossEntropy, pretrain)?;
    let probe = vec![Sample::vector(intention.probe.clone(), intention.target.clone())];
    let int = loss_grad(net, &SquaredError, &probe)?;
    let sup = loss_grad(net, &Supervised, supervised)?;
    let (a, b, s) = (weights.alpha(), weights.beta(), weights.supervised());
    let grad = stat
        .grad
        .iter()
        .zip(&int.grad)
        .zip(&sup.grad)
        .map(|((&x, &y), &z)| a * x + b * y + s * z)
        .collect();
    let terms = UnifiedTerms {
        statistical: stat.value,
        intention: int.value,
        supervised: sup.value,
        total: a * stat.value + b * int.value + s * sup.value,
    };
    Ok((terms, grad))
}

pub fn unified_loss(
    net: &Network<f64>,
    pretrain: &[Sample<f64>],
    weights: BoundaryWeights,
    intention: &IntentionCost,
    supervised: &[Sample<f64>],
) -> Result<UnifiedTerms, BoundaryError> {
    let stat = loss_value(net, &CrossEntropy, pretrain)?;
    let out = net.eval(&intention.probe)?;
    let int = SquaredError
        .eval(&Sample::vector(intention.probe.clone(), intention.target.clone()), &out)?
        .0;
    let sup = loss_value(net, &Supervised, supervised)?;
    let (a, b, s) = (weights.alpha(), weights.beta(), weights.supervised());
    Ok(UnifiedTerms {
        statistical: stat,
        intention: int,
        supervised: sup,
        total: a * stat + b * int + s * sup,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distance {
    #[default]
    SquaredEuclidean,
    Euclidean,
}

impl Distance {
    pub fn eval(self, a: &[f64], b: &[f64]) -> f64 {
        let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        match self {
            Distance::SquaredEuclidean => sq,
            Distance::Euclidean => sq.sqrt(),
        }
    }

    /// `∂d/∂a`; the derivative in `b` is its negation.
    fn grad(self, a: &[f64], b: &[f64]) -> Vec<f64> {
        let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        match self {
            Distance::SquaredEuclidean => diff.iter().map(|d| 2.0 * d).collect(),
            Distance::Euclidean => {
                let n = diff.iter().map(|d| d * d).sum::<f64>().sqrt();
                if n == 0.0 {
                    vec![0.0; diff.len()]
                } else {
                    diff.iter().map(|d| d / n).collect()
                }
            }
        }
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `−ln[e^{−d⁺} / (e^{−d⁺} + Σ_j e^{−d⁻_j})]`.
pub fn contrastive_loss(
    anchor: &[f64],
    positive: &[f64],
    negatives: &[Vec<f64>],
    d: Distance,
) -> Result<f64, BoundaryError> {
    if negatives.is_empty() {
        return Err(BoundaryError::EmptyNegatives);
    }
    let dp = d.eval(anchor, positive);
    let mut logits = vec![-dp];
    logits.extend(negatives.iter().map(|n| -d.eval(anchor, n)));
    Ok(dp + log_sum_exp(&logits))
}

/// Gradients of [`contrastive_loss`] in the anchor, the positive and each negative.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastiveGrad {
    pub value: f64,
    pub anchor: Vec<f64>,
    pub positive: Vec<f64>,
    pub negatives: Vec<Vec<f64>>,
}

pub fn contrastive_grad(
    anchor: &[f64],
    positive: &[f64],
    negatives: &[Vec<f64>],
    d: Distance,
) -> Result<ContrastiveGrad, BoundaryError> {
    if negatives.is_empty() {
        return Err(BoundaryError::EmptyNegatives);
    }
    let dp = d.eval(anchor, positive);
    let mut logits = vec![-dp];
    logits.extend(negatives.iter().map(|n| -d.eval(anchor, n)));
    let lse = log_sum_exp(&logits);
    let w: Vec<f64> = logits.iter().map(|l| (l - lse).exp()).collect();
    // loss = d⁺ + lse(−d), so ∂loss/∂d⁺ = 1 − w₀ and ∂loss/∂d⁻_j = −w_j.
    let gp = d.grad(anchor, positive);
    let mut g_anchor: Vec<f64> = gp.iter().map(|g| (1.0 - w[0]) * g).collect();
    let g_positive = gp.iter().map(|g| -(1.0 - w[0]) * g).collect();
    let mut g_neg = Vec::with_capacity(negatives.len());
    for (j, n) in negatives.iter().enumerate() {
        let gn = d.grad(anchor, n);
        for (a, g) in g_anchor.iter_mut().zip(&gn) {
            *a -= w[j + 1] * g;
        }
        g_neg.push(gn.iter().map(|g| w[j + 1] * g).collect());
    }
    Ok(ContrastiveGrad {
        value: dp + lse,
        anchor: g_anchor,
        positive: g_positive,
        negatives: g_neg,
    })
}

/// Inputs whose network embeddings form one contrastive group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastiveGroup {
    pub anchor: Vec<f64>,
    pub positive: Vec<f64>,
    pub negatives: Vec<Vec<f64>>,
}

/// Mean contrastive loss over groups with all members embedded by `net`, and its parameter gradient.
pub fn contrastive_loss_grad(
    net: &Network<f64>,
    groups: &[ContrastiveGroup],
    d: Distance,
) -> Result<LossGrad<f64>, BoundaryError> {
    if groups.is_empty() {
        return Err(NnError::EmptyBatch.into());
    }
    let n = groups.len() as f64;
    let mut value = 0.0;
    let mut grad = vec![0.0; net.num_params()];
    let mut pull = |x: &[f64], g_out: &[f64]| -> Result<(), NnError> {
        let traj = forward(net, x)?;
        let back = backprop(net, &traj, g_out)?;
        for (a, b) in grad.iter_mut().zip(back.params) {
            *a += b / n;
        }
        Ok(())
    };
    for grp in groups {
        let ha = net.eval(&grp.anchor)?;
        let hp = net.eval(&grp.positive)?;
        let hn = grp
            .negatives
            .iter()
            .map(|x| net.eval(x))
            .collect::<Result<Vec<_>, _>>()?;
        let cg = contrastive_grad(&ha, &hp, &hn, d)?;
        value += cg.value / n;
        pull(&grp.anchor, &cg.anchor)?;
        pull(&grp.positive, &cg.positive)?;
        for (x, g) in grp.negatives.iter().zip(&cg.negatives) {
            pull(x, g)?;
        }
    }
    if !value.is_finite() {
        return Err(NnError::NonFinite("loss").into());
    }
    Ok(LossGrad { value, grad })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nncore::{Activation, Matrix};

    #[test]
    fn weights_validated() {
        assert!(BoundaryWeights::new(0.5, 0.5).is_ok());
        assert!(BoundaryWeights::new(0.7, 0.4).is_err());
        assert!(BoundaryWeights::new(-0.1, 0.0).is_err());
        assert_eq!(BoundaryWeights::new(0.25, 0.25).unwrap().supervised(), 0.5);
    }

    #[test]
    fn weak_boundary_basics() {
        let net = Network::linear(Matrix::identity(1)).unwrap();
        let two = |_: &[f64]| 2.0;
        let wb = WeakBoundarySet::new(vec![WeakPoint {
            input: vec![0.3],
            eps: 0.1,
            reward: Reward::custom(two),
        }])
        .unwrap();
        assert!((weak_boundary_value(&net, &wb).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(weak_boundary_value(&net, &wb.scaled(0.0)).unwrap(), 0.0);
        let bad = WeakBoundarySet::new(vec![WeakPoint {
            input: vec![0.3],
            eps: 0.1,
            reward: Reward::custom(|_| f64::NAN),
        }])
        .unwrap();
        assert_eq!(weak_boundary_value(&net, &bad), Err(BoundaryError::NonFiniteReward(0)));
        assert!(WeakBoundarySet::new(vec![WeakPoint {
            input: vec![0.0],
            eps: -1.0,
            reward: Reward::NegSqDist(vec![0.0]),
        }])
        .is_err());
    }

    #[test]
    fn contrastive_closed_forms() {
        let a = [0.0, 0.0];
        let v = contrastive_loss(&a, &a, &[vec![1.0, 1.0]], Distance::SquaredEuclidean).unwrap();
        assert!((v - (1.0 + (-2.0f64).exp()).ln()).abs() < 1e-14);
        let eq = contrastive_loss(&a, &[1.0, 0.0], &[vec![0.0, 1.0]], Distance::SquaredEuclidean).unwrap();
        assert!((eq - 2f64.ln()).abs() < 1e-14);
        assert_eq!(
            contrastive_loss(&a, &a, &[], Distance::SquaredEuclidean),
            Err(BoundaryError::EmptyNegatives)
        );
    }

    #[test]
    fn contrastive_grad_matches_value() {
        let a = [0.2, -0.3];
        let p = [0.5, 0.1];
        let negs = vec![vec![-0.4, 0.9], vec![1.0, 1.0]];
        for d in [Distance::SquaredEuclidean, Distance::Euclidean] {
            let cg = contrastive_grad(&a, &p, &negs, d).unwrap();
            let fd = gradient(|x| Ok(contrastive_loss(x, &p, &negs, d).unwrap()), &a, 1e-6).unwrap();
            for (x, y) in cg.anchor.iter().zip(&fd) {
                assert!((x - y).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn stage0_rejects_bad_labels() {
        let net = Network::affine(Matrix::zeros(2, 1), vec![0.0; 2], Activation::Softmax).unwrap();
        assert!(stage0_pretrain(&net, &[Sample::class(vec![0.0], 2)], 1, 0.1).is_err());
        let plain = Network::linear(Matrix::<f64>::identity(2)).unwrap();
        assert_eq!(
            stage0_pretrain(&plain, &[Sample::class(vec![0.0, 0.0], 0)], 1, 0.1).unwrap_err(),
            BoundaryError::NotSoftmax
        );
    }

    #[test]
    fn sft_rejects_shape_mismatch() {
        let net = Network::linear(Matrix::<f64>::identity(2)).unwrap();
        assert!(stage1_sft(&net, &[Sample::vector(vec![1.0, 0.0], vec![1.0])], 1, 0.1).is_err());
        assert!(stage1_sft(&net, &[], 1, 0.1).is_err());
    }
}
