use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::map::{require_square, SquareMap};
use super::FixedPointError;
use crate::nncore::scalar::{dist, norm};
use crate::nncore::{spectral_radius, Network, NnError, Scalar, EIGEN_MAX_ITER, EIGEN_TOL};

pub const DIVERGENCE_BOUND: f64 = 1e12;

/// Multiplier on the convergence tolerance used for deduplication and for
/// accepting a point as "near" a fixed point.
pub const MERGE_FACTOR: f64 = 10.0;

/// Residual `e = f(x) − x` and its Euclidean norm.
pub fn residual<T: Scalar>(net: &Network<T>, x: &[T]) -> Result<(Vec<T>, T), FixedPointError> {
    require_square(net)?;
    map_residual(net, x)
}

pub fn map_residual<T: Scalar, M: SquareMap<T> + ?Sized>(
    map: &M,
    x: &[T],
) -> Result<(Vec<T>, T), FixedPointError> {
    let fx = map.apply(x)?;
    if fx.len() != x.len() {
        return Err(NnError::NotSquare {
            rows: fx.len(),
            cols: x.len(),
        }
        .into());
    }
    let e: Vec<T> = fx.iter().zip(x).map(|(&a, &b)| a - b).collect();
    let n = norm(&e);
    Ok((e, n))
}

/// Isotropic Gaussian per-step perturbation `δ_t ~ N(0, σ² I)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub sigma: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy)]
pub struct IterateOptions<T> {
    pub max_t: usize,
    pub tol: T,
    pub noise: Option<NoiseSpec>,
    pub blowup: T,
}

impl<T: Scalar> IterateOptions<T> {
    pub fn new(max_t: usize, tol: T) -> Self {
        Self {
            max_t,
            tol,
            noise: None,
            blowup: T::of(DIVERGENCE_BOUND),
        }
    }

    pub fn with_noise(mut self, noise: NoiseSpec) -> Self {
        self.noise = Some(noise);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointReport<T> {
    pub point: Vec<T>,
    pub residual_norm: T,
    pub jacobian_radius: T,
    /// `jacobian_radius < 1`, strictly.
    pub stable: bool,
    pub iterations_used: usize,
    pub basin_seed: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict<T> {
    Converged(FixedPointReport<T>),
    Diverged { step: usize, norm: T },
    /// `max_t` reached without the step falling below `tol`.
    Exhausted { last_step_norm: T },
}

#[derive(Debug, Clone)]
pub struct IterationRun<T> {
    /// `h_0, h_1, …` up to the last computed state.
    pub path: Vec<Vec<T>>,
    /// `‖h_{t+1} − h_t‖` for every step taken.
    pub step_norms: Vec<T>,
    pub verdict: Verdict<T>,
}

impl<T: Scalar> IterationRun<T> {
    pub fn fixed_point(&self) -> Option<&FixedPointReport<T>> {
        match &self.verdict {
            Verdict::Converged(r) => Some(r),
            _ => None,
        }
    }

    pub fn diverged(&self) -> bool {
        matches!(self.verdict, Verdict::Diverged { .. })
    }
}

/// Analyse a candidate point: residual and Jacobian spectral radius.
pub fn analyse_point<T: Scalar, M: SquareMap<T> + ?Sized>(
    map: &M,
    point: Vec<T>,
    iterations_used: usize,
    basin_seed: Vec<T>,
) -> Result<FixedPointReport<T>, FixedPointError> {
    let (_, residual_norm) = map_residual(map, &point)?;
    let j = map.jacobian(&point)?;
    let jacobian_radius = spectral_radius(&j, T::of(EIGEN_TOL), EIGEN_MAX_ITER)?;
    Ok(FixedPointReport {
        stable: jacobian_radius < T::one(),
        point,
        residual_norm,
        jacobian_radius,
        iterations_used,
        basin_seed,
    })
}

/// `h_{t+1} = f(h_t) + δ_t`, stopping once `‖h_{t+1} − h_t‖ < tol`.
pub fn iterate<T: Scalar, M: SquareMap<T> + ?Sized>(
    map: &M,
    h0: &[T],
    opts: &IterateOptions<T>,
) -> Result<IterationRun<T>, FixedPointError> {
    if !(opts.tol > T::zero()) {
        return Err(FixedPointError::InvalidArgument("tol must be positive".into()));
    }
    if h0.len() != map.dim() {
        return Err(NnError::DimensionMismatch {
            expected: map.dim(),
            found: h0.len(),
        }
        .into());
    }
    let mut noise = match opts.noise {
        Some(spec) => {
            let normal = Normal::new(0.0, spec.sigma)
                .map_err(|e| FixedPointError::InvalidArgument(e.to_string()))?;
            Some((normal, ChaCha8Rng::seed_from_u64(spec.seed)))
        }
        None => None,
    };
    let mut path = vec![h0.to_vec()];
    let mut step_norms = Vec::new();
    for t in 0..opts.max_t {
        let h = path.last().expect("nonempty");
        let mut next = map.apply(h)?;
        if next.len() != h.len() {
            return Err(NnError::NotSquare {
                rows: next.len(),
                cols: h.len(),
            }
            .into());
        }
        if let Some((normal, rng)) = noise.as_mut() {
            for v in next.iter_mut() {
                *v += T::of(normal.sample(rng));
            }
        }
        let n = norm(&next);
        if !n.is_finite() || n > opts.blowup {
            path.push(next);
            return Ok(IterationRun {
                path,
                step_norms,
                verdict: Verdict::Diverged { step: t + 1, norm: n },
            });
        }
        let step = dist(&next, h);
        step_norms.push(step);
        path.push(next);
        if step < opts.tol {
            let point = path.last().expect("nonempty").clone();
            let report = analyse_point(map, point, t + 1, h0.to_vec())?;
            return Ok(IterationRun {
                path,
                step_norms,
                verdict: Verdict::Converged(report),
            });
        }
    }
    let last_step_norm = step_norms.last().copied().unwrap_or_else(T::infinity);
    Ok(IterationRun {
        path,
        step_norms,
        verdict: Verdict::Exhausted { last_step_norm },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnumeratedPoint<T> {
    pub report: FixedPointReport<T>,
    /// Every start in the grid whose iteration converged here.
    pub basin_seeds: Vec<Vec<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Enumeration<T> {
    pub points: Vec<EnumeratedPoint<T>>,
    pub divergent_starts: Vec<Vec<T>>,
    pub unconverged_starts: Vec<Vec<T>>,
    pub merge_radius: T,
}

fn lex_cmp<T: Scalar>(a: &[T], b: &[T]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.partial_cmp(y) {
            Some(std::cmp::Ordering::Equal) | None => continue,
            Some(o) => return o,
        }
    }
    a.len().cmp(&b.len())
}

/// Run [`iterate`] from every start and merge limits closer than `10·tol`.
///
/// Each cluster is represented by its member with the smallest residual
/// (ties broken lexicographically by seed), and clusters are returned in
/// lexicographic order of their points, so the result does not depend on
/// the order of `init_grid`.
pub fn enumerate_fixed_points<T: Scalar, M: SquareMap<T> + ?Sized>(
    map: &M,
    init_grid: &[Vec<T>],
    opts: &IterateOptions<T>,
) -> Result<Enumeration<T>, FixedPointError> {
    let merge_radius = opts.tol * T::of(MERGE_FACTOR);
    let mut clusters: Vec<Vec<FixedPointReport<T>>> = Vec::new();
    let mut divergent_starts = Vec::new();
    let mut unconverged_starts = Vec::new();

    let mut starts: Vec<&Vec<T>> = init_grid.iter().collect();
    starts.sort_by(|a, b| lex_cmp(a, b));
    for start in starts {
        let run = iterate(map, start, opts)?;
        match run.verdict {
            Verdict::Converged(report) => {
                match clusters
                    .iter_mut()
                    .find(|c| c.iter().any(|m| dist(&m.point, &report.point) <= merge_radius))
                {
                    Some(c) => c.push(report),
                    None => clusters.push(vec![report]),
                }
            }
            Verdict::Diverged { .. } => divergent_starts.push(start.clone()),
            Verdict::Exhausted { .. } => unconverged_starts.push(start.clone()),
        }
    }

    let mut points: Vec<EnumeratedPoint<T>> = clusters
        .into_iter()
        .map(|mut members| {
            members.sort_by(|a, b| {
                a.residual_norm
                    .partial_cmp(&b.residual_norm)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then_with(|| lex_cmp(&a.basin_seed, &b.basin_seed))
            });
            let mut basin_seeds: Vec<Vec<T>> =
                members.iter().map(|m| m.basin_seed.clone()).collect();
            basin_seeds.sort_by(|a, b| lex_cmp(a, b));
            EnumeratedPoint {
                report: members.swap_remove(0),
                basin_seeds,
            }
        })
        .collect();
    points.sort_by(|a, b| lex_cmp(&a.report.point, &b.report.point));
    Ok(Enumeration {
        points,
        divergent_starts,
        unconverged_starts,
        merge_radius,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageContraction<T> {
    /// Spectral radius of the stage Jacobian; `None` when the stage is not square.
    pub radius: Option<T>,
    /// Operator 2-norm of the stage Jacobian.
    pub gain: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport<T> {
    pub point: Vec<T>,
    pub residual_norm: T,
    pub stages: Vec<StageContraction<T>>,
    pub end_to_end_radius: T,
    /// `end_to_end_radius < 1`, strictly.
    pub stable: bool,
}

/// Spectral analysis at a (near) fixed point.
///
/// Fails with [`FixedPointError::NotNearFixedPoint`] unless the residual at
/// `x_star` is below `10·tol`.
pub fn contraction_report<T: Scalar, M: SquareMap<T> + ?Sized>(
    map: &M,
    x_star: &[T],
    tol: T,
) -> Result<ContractionReport<T>, FixedPointError> {
    let (_, residual_norm) = map_residual(map, x_star)?;
    let bound = tol * T::of(MERGE_FACTOR);
    if !(residual_norm < bound) {
        return Err(FixedPointError::NotNearFixedPoint {
            residual: residual_norm.as_f64(),
            bound: bound.as_f64(),
        });
    }
    let eig_tol = T::of(EIGEN_TOL);
    let end_to_end_radius = spectral_radius(&map.jacobian(x_star)?, eig_tol, EIGEN_MAX_ITER)?;
    let mut stages = Vec::new();
    for j in map.stage_jacobians(x_star)? {
        let radius = if j.is_square() {
            Some(spectral_radius(&j, eig_tol, EIGEN_MAX_ITER)?)
        } else {
            None
        };
        let jtj = j.transpose().matmul(&j)?;
        let gain = spectral_radius(&jtj, eig_tol, EIGEN_MAX_ITER)?.sqrt();
        stages.push(StageContraction { radius, gain });
    }
    Ok(ContractionReport {
        point: x_star.to_vec(),
        residual_norm,
        stages,
        end_to_end_radius,
        stable: end_to_end_radius < T::one(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nncore::{Activation, Matrix};

    fn scalar_linear(a: f64) -> Network<f64> {
        Network::linear(Matrix::from_diag(&[a])).unwrap()
    }

    #[test]
    fn residual_of_simple_maps() {
        let id = Network::linear(Matrix::<f64>::identity(2)).unwrap();
        let (e, n) = residual(&id, &[3.0, -1.0]).unwrap();
        assert_eq!(e, vec![0.0, 0.0]);
        assert_eq!(n, 0.0);
        let half = Network::linear(Matrix::from_diag(&[0.5, 0.5])).unwrap();
        let (e, n) = residual(&half, &[2.0, 0.0]).unwrap();
        assert_eq!(e, vec![-1.0, 0.0]);
        assert_eq!(n, 1.0);
        let wide = Network::linear(Matrix::<f64>::zeros(3, 2)).unwrap();
        assert!(residual(&wide, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn halving_map_contracts_geometrically() {
        let run = iterate(&scalar_linear(0.5), &[8.0], &IterateOptions::new(200, 1e-10)).unwrap();
        let report = run.fixed_point().expect("converged");
        assert!(report.point[0].abs() < 1e-9);
        assert!(report.stable);
        assert_eq!(report.jacobian_radius, 0.5);
        for w in run.step_norms.windows(2) {
            assert_eq!(w[1] / w[0], 0.5);
        }
    }

    #[test]
    fn doubling_map_diverges() {
        let run = iterate(&scalar_linear(2.0), &[1.0], &IterateOptions::new(1000, 1e-10)).unwrap();
        assert!(run.diverged());
    }

    #[test]
    fn affine_scalar_map_finds_one() {
        let net = Network::affine(Matrix::from_diag(&[0.9f64]), vec![0.1], Activation::Identity).unwrap();
        let run = iterate(&net, &[0.0], &IterateOptions::new(10_000, 1e-12)).unwrap();
        let r = run.fixed_point().unwrap();
        assert!((r.point[0] - 1.0).abs() < 1e-10);
        assert!(r.residual_norm <= 1e-12);
    }

    #[test]
    fn exhausted_when_budget_too_small() {
        let run = iterate(&scalar_linear(0.99), &[1.0], &IterateOptions::new(5, 1e-12)).unwrap();
        assert!(matches!(run.verdict, Verdict::Exhausted { .. }));
        assert_eq!(run.path.len(), 6);
    }

    #[test]
    fn contraction_boundary_is_not_stable() {
        let id = scalar_linear(1.0);
        let rep = contraction_report(&id, &[0.3], 1e-10).unwrap();
        assert_eq!(rep.end_to_end_radius, 1.0);
        assert!(!rep.stable);
        let half = scalar_linear(0.5);
        let rep = contraction_report(&half, &[0.0], 1e-10).unwrap();
        assert_eq!(rep.end_to_end_radius, 0.5);
        assert!(rep.stable);
        assert!(matches!(
            contraction_report(&half, &[1.0], 1e-10),
            Err(FixedPointError::NotNearFixedPoint { .. })
        ));
    }

    #[test]
    fn single_fixed_point_of_halving_map() {
        let grid: Vec<Vec<f64>> = [-3.0, -1.0, 0.5, 2.0, 7.0].iter().map(|&v| vec![v]).collect();
        let e = enumerate_fixed_points(&scalar_linear(0.5), &grid, &IterateOptions::new(500, 1e-10))
            .unwrap();
        assert_eq!(e.points.len(), 1);
        assert_eq!(e.points[0].basin_seeds.len(), 5);
    }

    #[test]
    fn divergent_starts_are_recorded() {
        let grid = vec![vec![1.0], vec![0.0]];
        let e = enumerate_fixed_points(&scalar_linear(3.0), &grid, &IterateOptions::new(500, 1e-10))
            .unwrap();
        assert_eq!(e.divergent_starts, vec![vec![1.0]]);
        assert_eq!(e.points.len(), 1);
        assert!(!e.points[0].report.stable);
    }

    #[test]
    fn seeded_noise_is_reproducible() {
        let opts = IterateOptions::new(50, 1e-12).with_noise(NoiseSpec {
            sigma: 0.1,
            seed: 4,
        });
        let a = iterate(&scalar_linear(0.5), &[0.0], &opts).unwrap();
        let b = iterate(&scalar_linear(0.5), &[0.0], &opts).unwrap();
        assert_eq!(a.path, b.path);
        assert!(matches!(a.verdict, Verdict::Exhausted { .. }));
    }
}
