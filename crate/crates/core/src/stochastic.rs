//! Monte Carlo checks of sum statistics, union bounds on deviation events,
//! depth-wise contraction and noisy fixed points.

use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::fixedpoint::{iterate, FixedPointError, IterateOptions, Shifted, SquareMap};
use crate::nncore::scalar::dist;
use crate::nncore::{forward, Activation, Matrix, Network, NnError, Trajectory};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StochasticError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    FixedPoint(#[from] FixedPointError),
    #[error("map is not contractive at its fixed point (rho = {rho})")]
    NotContractive { rho: f64 },
    #[error("noiseless iteration did not reach a fixed point")]
    NoFixedPoint,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("degenerate sampler: {0}")]
    DegenerateSampler(String),
    #[error("{0}")]
    InvalidArgument(String),
}

fn rng_for(seed: u64, run: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_add(run))
}

/// Input distribution with independent coordinates of known moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputSampler {
    Gaussian { mean: Vec<f64>, std: Vec<f64> },
    Uniform { lo: Vec<f64>, hi: Vec<f64> },
}

impl InputSampler {
    pub fn standard_normal(dim: usize) -> Self {
        InputSampler::Gaussian {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            InputSampler::Gaussian { mean, .. } => mean.len(),
            InputSampler::Uniform { lo, .. } => lo.len(),
        }
    }

    fn validate(&self) -> Result<(), StochasticError> {
        let bad = |m: &str| Err(StochasticError::DegenerateSampler(m.into()));
        match self {
            InputSampler::Gaussian { mean, std } => {
                if mean.len() != std.len() {
                    return bad("mean and std lengths differ");
                }
                if std.iter().chain(mean).any(|v| !v.is_finite()) || std.iter().any(|&s| s < 0.0) {
                    return bad("std must be finite and non-negative");
                }
            }
            InputSampler::Uniform { lo, hi } => {
                if lo.len() != hi.len() {
                    return bad("bound lengths differ");
                }
                if lo.iter().zip(hi).any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite()) {
                    return bad("each interval needs finite lo < hi");
                }
            }
        }
        if self.dim() == 0 {
            return bad("zero-dimensional sampler");
        }
        Ok(())
    }

    /// Per-coordinate mean and variance.
    pub fn moments(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            InputSampler::Gaussian { mean, std } => (mean.clone(), std.iter().map(|s| s * s).collect()),
            InputSampler::Uniform { lo, hi } => (
                lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect(),
                lo.iter().zip(hi).map(|(a, b)| (b - a) * (b - a) / 12.0).collect(),
            ),
        }
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        match self {
            InputSampler::Gaussian { mean, std } => mean
                .iter()
                .zip(std)
                .map(|(&m, &s)| {
                    let z: f64 = rand_distr::StandardNormal.sample(rng);
                    m + s * z
                })
                .collect(),
            InputSampler::Uniform { lo, hi } => lo
                .iter()
                .zip(hi)
                .map(|(&a, &b)| Uniform::new(a, b).expect("validated bounds").sample(rng))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeStats {
    pub mean: f64,
    pub variance: f64,
    pub mean_std_err: f64,
    pub variance_std_err: f64,
    /// Closed-form moments when the pre-activation is affine in the input.
    pub analytic_mean: Option<f64>,
    pub analytic_variance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationStats {
    pub layer: usize,
    pub n_samples: usize,
    pub nodes: Vec<NodeStats>,
}

/// The affine map `x ↦ M x + c` feeding `layer`, if every earlier layer is linear.
fn affine_prefix(net: &Network<f64>, layer: usize) -> Option<(Matrix<f64>, Vec<f64>)> {
    let mut m = Matrix::identity(net.input_dim());
    let mut c = vec![0.0; net.input_dim()];
    for l in &net.layers()[..layer] {
        if l.activation != Activation::Identity {
            return None;
        }
        m = l.weights.matmul(&m).ok()?;
        c = l.weights.matvec(&c).ok()?.iter().zip(&l.bias).map(|(a, b)| a + b).collect();
    }
    Some((m, c))
}

/// Moments of the pre-activations `a = W_k h_k + b_k` of network layer `layer`.
pub fn activation_stats(
    net: &Network<f64>,
    layer: usize,
    sampler: &InputSampler,
    n_samples: usize,
    seed: u64,
) -> Result<ActivationStats, StochasticError> {
    sampler.validate()?;
    if sampler.dim() != net.input_dim() {
        return Err(StochasticError::DegenerateSampler(format!(
            "sampler has dimension {}, network expects {}",
            sampler.dim(),
            net.input_dim()
        )));
    }
    if layer >= net.layers().len() {
        return Err(StochasticError::InvalidArgument(format!("no layer {layer}")));
    }
    if n_samples < 100 {
        return Err(StochasticError::InsufficientData("need at least 100 samples".into()));
    }
    let lay = &net.layers()[layer];
    let mut rng = rng_for(seed, 0);
    let mut draws: Vec<Vec<f64>> = vec![Vec::with_capacity(n_samples); lay.out_dim()];
    for _ in 0..n_samples {
        let x = sampler.sample(&mut rng);
        let traj = forward(net, &x)?;
        let a = lay.weights.matvec(&traj.states[layer])?;
        for (n, (v, b)) in a.iter().zip(&lay.bias).enumerate() {
            draws[n].push(v + b);
        }
    }
    let analytic = affine_prefix(net, layer).map(|(m, c)| {
        let (mu, var) = sampler.moments();
        let wm = lay.weights.matmul(&m).expect("chained dims");
        let shift = lay.weights.matvec(&c).expect("chained dims");
        let means: Vec<f64> = wm
            .matvec(&mu)
            .expect("chained dims")
            .iter()
            .zip(&shift)
            .zip(&lay.bias)
            .map(|((a, s), b)| a + s + b)
            .collect();
        let vars: Vec<f64> = (0..wm.rows())
            .map(|i| wm.row(i).iter().zip(&var).map(|(w, v)| w * w * v).sum())
            .collect();
        (means, vars)
    });
    let nf = n_samples as f64;
    let nodes = draws
        .iter()
        .enumerate()
        .map(|(n, xs)| {
            let mean = xs.iter().sum::<f64>() / nf;
            let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / nf;
            let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / nf;
            let variance = m2 * nf / (nf - 1.0);
            NodeStats {
                mean,
                variance,
                mean_std_err: (variance / nf).sqrt(),
                variance_std_err: ((m4 - m2 * m2).max(0.0) / nf).sqrt(),
                analytic_mean: analytic.as_ref().map(|a| a.0[n]),
                analytic_variance: analytic.as_ref().map(|a| a.1[n]),
            }
        })
        .collect();
    Ok(ActivationStats {
        layer,
        n_samples,
        nodes,
    })
}

type EventFn = dyn Fn(&[f64]) -> bool + Send + Sync;

/// One deviation event `A_i` over a state vector.
#[derive(Clone)]
pub enum Event {
    Above { coord: usize, threshold: f64 },
    AbsAbove { coord: usize, threshold: f64 },
    /// `lo ≤ x[coord] < hi`
    Interval { coord: usize, lo: f64, hi: f64 },
    Custom(Arc<EventFn>),
}

impl fmt::Debug for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Event::Above { coord, threshold } => write!(f, "x[{coord}] > {threshold}"),
            Event::AbsAbove { coord, threshold } => write!(f, "|x[{coord}]| > {threshold}"),
            Event::Interval { coord, lo, hi } => write!(f, "{lo} <= x[{coord}] < {hi}"),
            Event::Custom(_) => f.write_str("custom"),
        }
    }
}

impl Event {
    pub fn custom(f: impl Fn(&[f64]) -> bool + Send + Sync + 'static) -> Self {
        Event::Custom(Arc::new(f))
    }

    pub fn occurs(&self, x: &[f64]) -> bool {
        let at = |c: usize| x.get(c).copied().unwrap_or(f64::NAN);
        match self {
            Event::Above { coord, threshold } => at(*coord) > *threshold,
            Event::AbsAbove { coord, threshold } => at(*coord).abs() > *threshold,
            Event::Interval { coord, lo, hi } => {
                let v = at(*coord);
                v >= *lo && v < *hi
            }
            Event::Custom(f) => f(x),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct DeviationSpec {
    pub events: Vec<Event>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnionBoundReport {
    pub n_samples: usize,
    pub per_event: Vec<f64>,
    pub p_union: f64,
    pub sum_p: f64,
    pub slack: f64,
    pub holds: bool,
    /// `Σ_{i<j} P(A_i ∩ A_j)`; the slack never exceeds it.
    pub pairwise_overlap: f64,
}

pub fn union_bound_check(samples: &[Vec<f64>], spec: &DeviationSpec) -> Result<UnionBoundReport, StochasticError> {
    if samples.is_empty() {
        return Err(StochasticError::InsufficientData("no samples".into()));
    }
    let k = spec.events.len();
    let mut per_event = vec![0usize; k];
    let mut union = 0usize;
    let mut pairs = 0usize;
    for x in samples {
        let hits: Vec<bool> = spec.events.iter().map(|e| e.occurs(x)).collect();
        let c = hits.iter().filter(|&&h| h).count();
        for (acc, &h) in per_event.iter_mut().zip(&hits) {
            *acc += h as usize;
        }
        union += (c > 0) as usize;
        pairs += c * c.saturating_sub(1) / 2;
    }
    let n = samples.len() as f64;
    let sum_hits: usize = per_event.iter().sum();
    let p_union = union as f64 / n;
    let sum_p = sum_hits as f64 / n;
    Ok(UnionBoundReport {
        n_samples: samples.len(),
        per_event: per_event.iter().map(|&c| c as f64 / n).collect(),
        p_union,
        sum_p,
        slack: (sum_hits - union) as f64 / n,
        holds: union <= sum_hits,
        pairwise_overlap: pairs as f64 / n,
    })
}

/// States of `layer` (trajectory index) for each input.
pub fn layer_states(net: &Network<f64>, inputs: &[Vec<f64>], layer: usize) -> Result<Vec<Vec<f64>>, StochasticError> {
    inputs
        .iter()
        .map(|x| {
            let t = forward(net, x)?;
            t.states
                .get(layer)
                .cloned()
                .ok_or_else(|| StochasticError::InvalidArgument(format!("no state {layer}")))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionFit {
    /// `None` when the regressor has no spread.
    pub rho: Option<f64>,
    pub xi: Option<f64>,
    pub r_squared: Option<f64>,
    pub degenerate: bool,
    pub contractive: Option<bool>,
    pub depth_errors: Vec<(f64, f64)>,
    /// `e_{j+1} − (ρ e_j + ξ)` for each pair.
    pub residuals: Vec<f64>,
}

/// Least-squares fit of `e_{j+1} = ρ e_j + ξ` over error pairs.
pub fn fit_error_pairs(pairs: Vec<(f64, f64)>) -> Result<ContractionFit, StochasticError> {
    if pairs.len() < 2 {
        return Err(StochasticError::InsufficientData("need at least two error pairs".into()));
    }
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pairs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pairs.iter().map(|p| (p.1 - my).powi(2)).sum();
    let scale = pairs.iter().map(|p| p.0 * p.0).sum::<f64>();
    if sxx <= 1e-24 * scale.max(f64::MIN_POSITIVE) || sxx == 0.0 {
        return Ok(ContractionFit {
            rho: None,
            xi: None,
            r_squared: None,
            degenerate: true,
            contractive: None,
            residuals: Vec::new(),
            depth_errors: pairs,
        });
    }
    let rho = sxy / sxx;
    let xi = my - rho * mx;
    let residuals: Vec<f64> = pairs.iter().map(|p| p.1 - (rho * p.0 + xi)).collect();
    let sse: f64 = residuals.iter().map(|r| r * r).sum();
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    Ok(ContractionFit {
        rho: Some(rho),
        xi: Some(xi),
        r_squared: Some(r_squared),
        degenerate: false,
        contractive: Some(rho < 1.0),
        depth_errors: pairs,
        residuals,
    })
}

/// Per-depth mean state over a set of trajectories.
pub fn depth_means(trajectories: &[Trajectory<f64>]) -> Vec<Vec<f64>> {
    let depth = trajectories[0].states.len();
    (0..depth)
        .map(|j| {
            let dim = trajectories[0].states[j].len();
            let mut m = vec![0.0; dim];
            for t in trajectories {
                for (a, b) in m.iter_mut().zip(&t.states[j]) {
                    *a += b;
                }
            }
            m.iter().map(|v| v / trajectories.len() as f64).collect()
        })
        .collect()
}

/// `e_j = ‖h_j − center_j‖` along every trajectory, then [`fit_error_pairs`].
///
/// Centers default to the per-depth mean of the supplied trajectories.
pub fn depth_contraction_fit(
    trajectories: &[Trajectory<f64>],
    centers: Option<&[Vec<f64>]>,
) -> Result<ContractionFit, StochasticError> {
    if trajectories.len() < 10 {
        return Err(StochasticError::InsufficientData("need at least 10 trajectories".into()));
    }
    let depth = trajectories[0].states.len();
    if depth < 2 {
        return Err(StochasticError::InsufficientData("need at least two depths".into()));
    }
    if trajectories.iter().any(|t| t.states.len() != depth) {
        return Err(StochasticError::InvalidArgument("trajectories differ in depth".into()));
    }
    let own;
    let centers = match centers {
        Some(c) => c,
        None => {
            own = depth_means(trajectories);
            &own
        }
    };
    if centers.len() != depth {
        return Err(StochasticError::InvalidArgument(format!(
            "{} centers for {depth} depths",
            centers.len()
        )));
    }
    let mut pairs = Vec::with_capacity(trajectories.len() * (depth - 1));
    for t in trajectories {
        let e: Vec<f64> = t.states.iter().zip(centers).map(|(h, c)| dist(h, c)).collect();
        pairs.extend(e.windows(2).map(|w| (w[0], w[1])));
    }
    fit_error_pairs(pairs)
}

/// `(1 − ε)^n`, the probability of an unbroken chain of `n` independent successes.
pub fn chain_error_model(eps: f64, n: u64) -> Result<f64, StochasticError> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(StochasticError::InvalidArgument("eps must lie in [0, 1]".into()));
    }
    Ok(match i32::try_from(n) {
        Ok(k) => (1.0 - eps).powi(k),
        Err(_) => (1.0 - eps).powf(n as f64),
    })
}

fn noiseless_fixed_point<M: SquareMap<f64>>(map: &M, h0: &[f64]) -> Result<(Vec<f64>, f64), StochasticError> {
    let run = iterate(map, h0, &IterateOptions::new(100_000, 1e-13))?;
    let fp = run.fixed_point().ok_or(StochasticError::NoFixedPoint)?;
    if !fp.stable {
        return Err(StochasticError::NotContractive {
            rho: fp.jacobian_radius,
        });
    }
    Ok((fp.point.clone(), fp.jacobian_radius))
}

fn noisy_step<M: SquareMap<f64>>(
    map: &M,
    h: &[f64],
    sigma: f64,
    bias: &[f64],
    rng: &mut ChaCha8Rng,
    noise_sum: &mut [f64],
) -> Result<Vec<f64>, StochasticError> {
    let normal = Normal::new(0.0, sigma).map_err(|e| StochasticError::InvalidArgument(e.to_string()))?;
    let mut next = map.apply(h)?;
    for (i, v) in next.iter_mut().enumerate() {
        let d = bias.get(i).copied().unwrap_or(0.0) + if sigma > 0.0 { normal.sample(rng) } else { 0.0 };
        noise_sum[i] += d;
        *v += d;
    }
    Ok(next)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpUnionRow {
    pub depth: usize,
    pub measured_freq: f64,
    pub chain_pred: f64,
    pub union_sum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plateau {
    pub second_quarter_mean: f64,
    pub last_quarter_mean: f64,
    pub relative_gap: f64,
    pub plateaued: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpUnionReport {
    pub x_star: Vec<f64>,
    pub rho: f64,
    pub sigma: f64,
    /// Root-mean-square distance from `x*` in the second half of the pilot runs.
    pub stationary_scale: f64,
    pub threshold: f64,
    /// Deviation frequency at depth 1, the per-step failure probability of the chain model.
    pub eps: f64,
    pub rows: Vec<ExpUnionRow>,
    pub plateau: Plateau,
    /// `chain_pred / measured_freq` at the deepest depth, `None` when nothing deviated.
    pub chain_ratio: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpUnionConfig {
    pub sigma: f64,
    pub depth: usize,
    pub n_runs: usize,
    pub pilot_runs: usize,
    pub seed: u64,
}

/// Run noisy iteration from `x*` and contrast deviation frequencies with the compounding chain model.
///
/// A run deviates at depth `t` when `‖h_t − x*‖` exceeds twice the pilot stationary scale.
/// `union_sum` bounds that event by the coordinate events `|h_t,i − x*_i| > thr/√d`.
pub fn exp_vs_union_experiment<M: SquareMap<f64>>(
    map: &M,
    cfg: &ExpUnionConfig,
) -> Result<ExpUnionReport, StochasticError> {
    if cfg.depth < 4 || cfg.n_runs == 0 || cfg.pilot_runs == 0 {
        return Err(StochasticError::InvalidArgument(
            "need depth >= 4 and at least one pilot and one main run".into(),
        ));
    }
    if !(cfg.sigma >= 0.0) {
        return Err(StochasticError::InvalidArgument("sigma must be non-negative".into()));
    }
    let dim = map.dim();
    let (x_star, rho) = noiseless_fixed_point(map, &vec![0.0; dim])?;
    let mut scratch = vec![0.0; dim];

    let mut sq = 0.0;
    let mut count = 0usize;
    for r in 0..cfg.pilot_runs {
        let mut rng = rng_for(cfg.seed, (cfg.n_runs + r) as u64);
        let mut h = x_star.clone();
        for t in 1..=cfg.depth {
            h = noisy_step(map, &h, cfg.sigma, &[], &mut rng, &mut scratch)?;
            if t > cfg.depth / 2 {
                sq += dist(&h, &x_star).powi(2);
                count += 1;
            }
        }
    }
    let stationary_scale = (sq / count as f64).sqrt();
    let threshold = (2.0 * stationary_scale).max(1e-9);
    let coord_thr = threshold / (dim as f64).sqrt();

    let mut deviated = vec![0usize; cfg.depth];
    let mut coord_hits = vec![0usize; cfg.depth];
    for r in 0..cfg.n_runs {
        let mut rng = rng_for(cfg.seed, r as u64);
        let mut h = x_star.clone();
        for t in 0..cfg.depth {
            h = noisy_step(map, &h, cfg.sigma, &[], &mut rng, &mut scratch)?;
            if dist(&h, &x_star) > threshold {
                deviated[t] += 1;
            }
            coord_hits[t] += h
                .iter()
                .zip(&x_star)
                .filter(|(a, b)| (*a - *b).abs() > coord_thr)
                .count();
        }
    }
    let n = cfg.n_runs as f64;
    let eps = deviated[0] as f64 / n;
    let mut rows = Vec::with_capacity(cfg.depth);
    for t in 0..cfg.depth {
        rows.push(ExpUnionRow {
            depth: t + 1,
            measured_freq: deviated[t] as f64 / n,
            chain_pred: 1.0 - chain_error_model(eps, (t + 1) as u64)?,
            union_sum: coord_hits[t] as f64 / n,
        });
    }
    let q = cfg.depth / 4;
    let mean = |rs: &[ExpUnionRow]| rs.iter().map(|r| r.measured_freq).sum::<f64>() / rs.len() as f64;
    let second = mean(&rows[q..2 * q]);
    let last = mean(&rows[cfg.depth - q..]);
    let relative_gap = if second > 0.0 {
        (last - second).abs() / second
    } else if last == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    let deepest = rows.last().expect("depth >= 4");
    let chain_ratio = (deepest.measured_freq > 0.0).then(|| deepest.chain_pred / deepest.measured_freq);
    Ok(ExpUnionReport {
        x_star,
        rho,
        sigma: cfg.sigma,
        stationary_scale,
        threshold,
        eps,
        plateau: Plateau {
            second_quarter_mean: second,
            last_quarter_mean: last,
            relative_gap,
            plateaued: relative_gap <= 0.2,
        },
        chain_ratio,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StochasticConfig {
    pub sigma: f64,
    /// Systematic noise mean; empty means zero.
    pub bias: Vec<f64>,
    pub burn_in: usize,
    pub n_draws: usize,
    pub seed: u64,
}

pub const QUANTILE_LEVELS: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StochasticFixedPoint {
    /// Noiseless fixed point `h = Φ(h)`.
    pub x_star: Vec<f64>,
    pub rho: f64,
    pub mean: Vec<f64>,
    pub covariance: Matrix<f64>,
    pub std: Vec<f64>,
    /// `quantiles[i][q]` at [`QUANTILE_LEVELS`].
    pub quantiles: Vec<Vec<f64>>,
    /// Empirical mean of the injected perturbations.
    pub delta_bar: Vec<f64>,
    /// Solution of `h = Φ(h) + δ̄`.
    pub avg_fixed_point: Vec<f64>,
    /// `mean − x*`.
    pub mean_shift: Vec<f64>,
    pub mean_std_err: Vec<f64>,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Summarize the stationary law of `h_{t+1} = Φ(h_t) + δ_t` started from the origin.
pub fn stochastic_fixed_point<M: SquareMap<f64>>(
    map: &M,
    cfg: &StochasticConfig,
) -> Result<StochasticFixedPoint, StochasticError> {
    if cfg.n_draws < 2 {
        return Err(StochasticError::InsufficientData("need at least two draws".into()));
    }
    if !(cfg.sigma >= 0.0) {
        return Err(StochasticError::InvalidArgument("sigma must be non-negative".into()));
    }
    let dim = map.dim();
    if !cfg.bias.is_empty() && cfg.bias.len() != dim {
        return Err(NnError::DimensionMismatch {
            expected: dim,
            found: cfg.bias.len(),
        }
        .into());
    }
    let h0 = vec![0.0; dim];
    let (x_star, rho) = noiseless_fixed_point(map, &h0)?;
    let mut rng = rng_for(cfg.seed, 0);
    let mut noise_sum = vec![0.0; dim];
    let mut h = h0;
    for _ in 0..cfg.burn_in {
        h = noisy_step(map, &h, cfg.sigma, &cfg.bias, &mut rng, &mut noise_sum)?;
    }
    let mut draws = Vec::with_capacity(cfg.n_draws);
    for _ in 0..cfg.n_draws {
        h = noisy_step(map, &h, cfg.sigma, &cfg.bias, &mut rng, &mut noise_sum)?;
        draws.push(h.clone());
    }
    let n = cfg.n_draws as f64;
    let mean: Vec<f64> = (0..dim).map(|i| draws.iter().map(|d| d[i]).sum::<f64>() / n).collect();
    let mut covariance: Matrix<f64> = Matrix::zeros(dim, dim);
    for d in &draws {
        for a in 0..dim {
            for b in 0..dim {
                covariance[(a, b)] += (d[a] - mean[a]) * (d[b] - mean[b]) / (n - 1.0);
            }
        }
    }
    let std: Vec<f64> = covariance.diagonal().iter().map(|v| v.sqrt()).collect();
    let quantiles = (0..dim)
        .map(|i| {
            let mut col: Vec<f64> = draws.iter().map(|d| d[i]).collect();
            col.sort_by(f64::total_cmp);
            QUANTILE_LEVELS.iter().map(|&q| quantile(&col, q)).collect()
        })
        .collect();
    let steps = (cfg.burn_in + cfg.n_draws) as f64;
    let delta_bar: Vec<f64> = noise_sum.iter().map(|s| s / steps).collect();
    let shifted = Shifted {
        base: map,
        shift: delta_bar.clone(),
    };
    let avg_fixed_point = noiseless_fixed_point(&shifted, &x_star)?.0;
    Ok(StochasticFixedPoint {
        mean_shift: mean.iter().zip(&x_star).map(|(m, x)| m - x).collect(),
        mean_std_err: std.iter().map(|s| s / n.sqrt()).collect(),
        x_star,
        rho,
        mean,
        covariance,
        std,
        quantiles,
        delta_bar,
        avg_fixed_point,
    })
}
