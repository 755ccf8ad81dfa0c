//! Gaussian level-set fields, accumulated curvature and effective capacity.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::nncore::linalg::{cholesky, spd_inverse};
use crate::nncore::{forward, Matrix, Network, NnError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlasticityError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("covariance must be symmetric positive definite")]
    SingularCovariance,
    #[error("level must lie strictly between 0 and 1 (got {0})")]
    InvalidLevel(f64),
    #[error("acceptance rate {rate:e} after {attempts} draws is below 1e-4")]
    LowAcceptance { rate: f64, attempts: usize },
    #[error("need at least {needed} samples to fit {k} components, have {have}")]
    TooFewSamples { needed: usize, have: usize, k: usize },
    #[error("{0}")]
    InvalidArgument(String),
}

/// `φ(x) = exp(−½ (x−μ)ᵀ Σ⁻¹ (x−μ))` with a level `c` marking its torus-like shell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaussianComponent {
    mu: Vec<f64>,
    sigma: Matrix<f64>,
    level: f64,
    #[serde(skip)]
    precision: Matrix<f64>,
    #[serde(skip)]
    chol: Matrix<f64>,
}

impl GaussianComponent {
    pub fn new(mu: Vec<f64>, sigma: Matrix<f64>, level: f64) -> Result<Self, PlasticityError> {
        if !(level > 0.0 && level < 1.0) {
            return Err(PlasticityError::InvalidLevel(level));
        }
        if sigma.rows() != mu.len() || sigma.cols() != mu.len() {
            return Err(NnError::DimensionMismatch {
                expected: mu.len(),
                found: sigma.rows(),
            }
            .into());
        }
        let scale = sigma.frobenius().max(f64::MIN_POSITIVE);
        if sigma.max_abs_diff(&sigma.transpose()) > 1e-12 * scale {
            return Err(PlasticityError::SingularCovariance);
        }
        let chol = cholesky(&sigma).map_err(|_| PlasticityError::SingularCovariance)?;
        let precision = spd_inverse(&sigma).map_err(|_| PlasticityError::SingularCovariance)?;
        if !mu.iter().all(|v| v.is_finite()) {
            return Err(NnError::NonFinite("mean").into());
        }
        Ok(Self {
            mu,
            sigma,
            level,
            precision,
            chol,
        })
    }

    pub fn isotropic(mu: Vec<f64>, var: f64, level: f64) -> Result<Self, PlasticityError> {
        let d = mu.len();
        Self::new(mu, Matrix::identity(d).scale(var), level)
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn sigma(&self) -> &Matrix<f64> {
        &self.sigma
    }

    pub fn level(&self) -> f64 {
        self.level
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// Same component with covariance multiplied by `s`.
    pub fn with_scaled_covariance(&self, s: f64) -> Result<Self, PlasticityError> {
        Self::new(self.mu.clone(), self.sigma.scale(s), self.level)
    }

    fn offset(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        if x.len() != self.dim() {
            return Err(NnError::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(x.iter().zip(&self.mu).map(|(a, b)| a - b).collect())
    }

    pub fn mahalanobis_sq(&self, x: &[f64]) -> Result<f64, NnError> {
        let d = self.offset(x)?;
        let pd = self.precision.matvec(&d)?;
        Ok(d.iter().zip(&pd).map(|(a, b)| a * b).sum())
    }

    /// `∇²φ = φ (P d dᵀ P − P)` with `P = Σ⁻¹`, `d = x − μ`.
    pub fn hessian(&self, x: &[f64]) -> Result<Matrix<f64>, NnError> {
        let d = self.offset(x)?;
        let pd = self.precision.matvec(&d)?;
        let phi = (-0.5 * d.iter().zip(&pd).map(|(a, b)| a * b).sum::<f64>()).exp();
        let n = self.dim();
        let mut h = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                h[(i, j)] = phi * (pd[i] * pd[j] - self.precision[(i, j)]);
            }
        }
        Ok(h)
    }

    /// `∇φ = −φ P d`.
    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        let d = self.offset(x)?;
        let pd = self.precision.matvec(&d)?;
        let phi = (-0.5 * d.iter().zip(&pd).map(|(a, b)| a * b).sum::<f64>()).exp();
        Ok(pd.iter().map(|v| -phi * v).collect())
    }
}

pub fn gaussian_value(comp: &GaussianComponent, x: &[f64]) -> Result<f64, PlasticityError> {
    Ok((-0.5 * comp.mahalanobis_sq(x)?).exp())
}

/// Central-difference Hessian of `φ`.
pub fn hessian_fd(comp: &GaussianComponent, x: &[f64], step: f64) -> Result<Matrix<f64>, PlasticityError> {
    let n = comp.dim();
    let mut h = Matrix::zeros(n, n);
    let mut p = x.to_vec();
    for j in 0..n {
        p[j] = x[j] + step;
        let up = comp.gradient(&p)?;
        p[j] = x[j] - step;
        let down = comp.gradient(&p)?;
        p[j] = x[j];
        for i in 0..n {
            h[(i, j)] = (up[i] - down[i]) / (2.0 * step);
        }
    }
    Ok(h)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSetSample {
    pub points: Vec<Vec<f64>>,
    pub attempts: usize,
    /// Number of requested points not delivered before the draw budget ran out.
    pub shortfall: usize,
}

/// Rejection-sample points with `|φ(x) − c| < band` from the box `μ + L[−r, r]^d`.
///
/// `r` is the Mahalanobis radius of the band's outer edge, so the box contains the whole band.
pub fn level_set_sample(
    comp: &GaussianComponent,
    n: usize,
    band: f64,
    seed: u64,
) -> Result<LevelSetSample, PlasticityError> {
    if !(band > 0.0) {
        return Err(PlasticityError::InvalidArgument("band must be positive".into()));
    }
    let lower = (comp.level - band).max(1e-12);
    let r = (-2.0 * lower.ln()).sqrt();
    let d = comp.dim();
    let budget = 1_000_000usize.max(1000 * n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n);
    let mut attempts = 0usize;
    let mut z = vec![0.0; d];
    while points.len() < n && attempts < budget {
        attempts += 1;
        z.iter_mut().for_each(|v| *v = rng.random_range(-r..r));
        let lz = comp.chol.matvec(&z)?;
        let x: Vec<f64> = comp.mu.iter().zip(&lz).map(|(m, v)| m + v).collect();
        if (gaussian_value(comp, &x)? - comp.level).abs() < band {
            points.push(x);
        }
        if attempts >= 10_000 && (points.len() as f64) < 1e-4 * attempts as f64 {
            return Err(PlasticityError::LowAcceptance {
                rate: points.len() as f64 / attempts as f64,
                attempts,
            });
        }
    }
    Ok(LevelSetSample {
        shortfall: n - points.len(),
        points,
        attempts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvatureConfig {
    pub samples_per_component: usize,
    /// Band half-width as a fraction of each component's level.
    pub band_fraction: f64,
    pub seed: u64,
}

impl Default for CurvatureConfig {
    fn default() -> Self {
        Self {
            samples_per_component: 2000,
            band_fraction: 0.05,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureReport {
    pub r: f64,
    pub per_component: Vec<f64>,
    /// Worst relative gap between analytic and finite-difference Hessians on spot-check points.
    pub fd_spot_check: f64,
}

/// `R = Σ_i mean_{x ∈ T_i} ‖∇²φ_i(x)‖²_F` over level-band samples.
pub fn curvature_functional(
    components: &[GaussianComponent],
    cfg: &CurvatureConfig,
) -> Result<CurvatureReport, PlasticityError> {
    if components.is_empty() {
        return Err(PlasticityError::InvalidArgument("no components".into()));
    }
    if cfg.samples_per_component == 0 {
        return Err(PlasticityError::InvalidArgument("need at least one sample per component".into()));
    }
    let mut per_component = Vec::with_capacity(components.len());
    let mut fd_spot_check: f64 = 0.0;
    for (i, comp) in components.iter().enumerate() {
        let band = cfg.band_fraction * comp.level;
        let s = level_set_sample(comp, cfg.samples_per_component, band, cfg.seed.wrapping_add(i as u64))?;
        if s.points.is_empty() {
            return Err(PlasticityError::InvalidArgument(format!("component {i} produced no samples")));
        }
        let mut total = 0.0;
        for (k, x) in s.points.iter().enumerate() {
            let h = comp.hessian(x)?;
            total += h.frobenius().powi(2);
            if k < 3 {
                let fd = hessian_fd(comp, x, 1e-5)?;
                let gap = h.sub(&fd)?.frobenius() / h.frobenius().max(fd.frobenius()).max(f64::MIN_POSITIVE);
                fd_spot_check = fd_spot_check.max(gap);
            }
        }
        per_component.push(total / s.points.len() as f64);
    }
    Ok(CurvatureReport {
        r: per_component.iter().sum(),
        per_component,
        fd_spot_check,
    })
}

/// `C_eff = C0 / (1 + R)`.
pub fn effective_capacity(c0: f64, r: f64) -> Result<f64, PlasticityError> {
    if !(c0 > 0.0) || !(r >= 0.0) || !c0.is_finite() {
        return Err(PlasticityError::InvalidArgument("need C0 > 0 and R >= 0".into()));
    }
    Ok(c0 / (1.0 + r))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidityPoint {
    pub step: usize,
    pub r: f64,
    pub c_eff: f64,
}

/// Checkpointed `(R, C_eff)` pairs; `C_eff` is always derived from `R`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RigidityCurve {
    c0: f64,
    points: Vec<RigidityPoint>,
}

impl RigidityCurve {
    pub fn new(c0: f64) -> Result<Self, PlasticityError> {
        effective_capacity(c0, 0.0)?;
        Ok(Self {
            c0,
            points: Vec::new(),
        })
    }

    pub fn record(&mut self, step: usize, r: f64) -> Result<RigidityPoint, PlasticityError> {
        let p = RigidityPoint {
            step,
            r,
            c_eff: effective_capacity(self.c0, r)?,
        };
        self.points.push(p);
        Ok(p)
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }

    pub fn points(&self) -> &[RigidityPoint] {
        &self.points
    }
}

/// Deterministic k-centers seeding followed by one nearest-center assignment.
///
/// The first center is drawn from `seed`; each next one is the point farthest from those chosen.
pub fn k_centers(points: &[Vec<f64>], k: usize, seed: u64) -> Vec<usize> {
    let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = vec![rng.random_range(0..points.len())];
    let mut nearest: Vec<f64> = points.iter().map(|p| sq(p, &points[centers[0]])).collect();
    while centers.len() < k {
        let (far, _) = nearest
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &d)| if d > best.1 { (i, d) } else { best });
        centers.push(far);
        for (d, p) in nearest.iter_mut().zip(points) {
            *d = d.min(sq(p, &points[far]));
        }
    }
    points
        .iter()
        .map(|p| {
            centers
                .iter()
                .enumerate()
                .map(|(c, &idx)| (c, sq(p, &points[idx])))
                .fold((0, f64::INFINITY), |best, (c, d)| if d < best.1 { (c, d) } else { best })
                .0
        })
        .collect()
}

pub const FIT_RIDGE: f64 = 1e-6;

/// Fit `k` Gaussian components to a point cloud by cluster moments plus a small ridge.
pub fn fit_components(
    cloud: &[Vec<f64>],
    k: usize,
    level: f64,
    seed: u64,
) -> Result<Vec<GaussianComponent>, PlasticityError> {
    if k == 0 || cloud.is_empty() {
        return Err(PlasticityError::InvalidArgument("need k >= 1 and a nonempty cloud".into()));
    }
    let d = cloud[0].len();
    let needed = k * (d + 1);
    if cloud.len() < needed {
        return Err(PlasticityError::TooFewSamples {
            needed,
            have: cloud.len(),
            k,
        });
    }
    let labels = k_centers(cloud, k, seed);
    let mut out = Vec::with_capacity(k);
    for c in 0..k {
        let members: Vec<&Vec<f64>> = cloud.iter().zip(&labels).filter(|(_, &l)| l == c).map(|(p, _)| p).collect();
        if members.is_empty() {
            continue;
        }
        let m = members.len() as f64;
        let mu: Vec<f64> = (0..d).map(|i| members.iter().map(|p| p[i]).sum::<f64>() / m).collect();
        let mut sigma = Matrix::identity(d).scale(FIT_RIDGE);
        for p in &members {
            for a in 0..d {
                for b in 0..d {
                    sigma[(a, b)] += (p[a] - mu[a]) * (p[b] - mu[b]) / m;
                }
            }
        }
        out.push(GaussianComponent::new(mu, sigma, level)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RigidityConfig {
    pub components: usize,
    pub level: f64,
    pub c0: f64,
    pub curvature: CurvatureConfig,
}

/// Build a rigidity curve from `(step, activation cloud)` checkpoints.
pub fn rigidity_from_clouds(
    clouds: &[(usize, Vec<Vec<f64>>)],
    cfg: &RigidityConfig,
) -> Result<(RigidityCurve, Vec<Vec<GaussianComponent>>), PlasticityError> {
    if clouds.len() < 2 {
        return Err(PlasticityError::InvalidArgument("need at least two checkpoints".into()));
    }
    let mut curve = RigidityCurve::new(cfg.c0)?;
    let mut fitted = Vec::with_capacity(clouds.len());
    for (step, cloud) in clouds {
        let comps = fit_components(cloud, cfg.components, cfg.level, cfg.curvature.seed)?;
        let rep = curvature_functional(&comps, &cfg.curvature)?;
        curve.record(*step, rep.r)?;
        fitted.push(comps);
    }
    Ok((curve, fitted))
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub step: usize,
    pub net: Network<f64>,
}

/// Fit components to the trajectory state `layer` of every checkpoint on `inputs`.
pub fn rigidity_track(
    checkpoints: &[Checkpoint],
    inputs: &[Vec<f64>],
    layer: usize,
    cfg: &RigidityConfig,
) -> Result<RigidityCurve, PlasticityError> {
    let mut clouds = Vec::with_capacity(checkpoints.len());
    for cp in checkpoints {
        let cloud = inputs
            .iter()
            .map(|x| {
                let t = forward(&cp.net, x)?;
                t.states
                    .get(layer)
                    .cloned()
                    .ok_or_else(|| NnError::InvalidArgument(format!("no state {layer}")))
            })
            .collect::<Result<Vec<_>, NnError>>()?;
        clouds.push((cp.step, cloud));
    }
    Ok(rigidity_from_clouds(&clouds, cfg)?.0)
}
