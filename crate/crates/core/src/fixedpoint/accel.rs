use num_traits::{Num, Signed};
use serde::{Deserialize, Serialize};

use super::map::{Perturbed, SquareMap};
use super::FixedPointError;
use crate::nncore::{spectral_radius, Matrix, NnError, Scalar, EIGEN_MAX_ITER, EIGEN_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccelerationReport<T> {
    pub rho_base: T,
    pub rho_perturbed: T,
    /// `rho_perturbed < rho_base` on the reported values.
    pub accelerated: bool,
}

/// Compare `ρ(J_f)` with `ρ(J_f + ε J_g)` at `x_star`.
pub fn perturbation_accel<T: Scalar, F: SquareMap<T>, G: SquareMap<T>>(
    f: &F,
    g: &G,
    eps: T,
    x_star: &[T],
) -> Result<AccelerationReport<T>, FixedPointError> {
    if eps < T::zero() {
        return Err(FixedPointError::InvalidArgument("eps must be non-negative".into()));
    }
    if f.dim() != g.dim() {
        return Err(NnError::DimensionMismatch {
            expected: f.dim(),
            found: g.dim(),
        }
        .into());
    }
    let jf = f.jacobian(x_star)?;
    let perturbed = Perturbed {
        base: f,
        direction: g,
        eps,
    };
    let jp = perturbed.jacobian(x_star)?;
    if !jf.all_finite() || !jp.all_finite() {
        return Err(NnError::NonFinite("jacobian").into());
    }
    let tol = T::of(EIGEN_TOL);
    let rho_base = spectral_radius(&jf, tol, EIGEN_MAX_ITER)?;
    let rho_perturbed = spectral_radius(&jp, tol, EIGEN_MAX_ITER)?;
    Ok(AccelerationReport {
        rho_base,
        rho_perturbed,
        accelerated: rho_perturbed < rho_base,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreconditionedStep<T> {
    pub theta: Vec<T>,
    /// `I − lr·G⁻¹H`, present when a Hessian was supplied.
    pub effective_jacobian: Option<Matrix<T>>,
}

impl<T: Clone + Num + Signed + PartialOrd> PreconditionedStep<T> {
    /// Exact `ρ(J_eff)` when `J_eff` is triangular (e.g. diagonal `G` and `H`).
    pub fn exact_radius(&self) -> Option<T> {
        self.effective_jacobian
            .as_ref()
            .and_then(Matrix::triangular_spectral_radius)
    }
}

impl<T: Scalar> PreconditionedStep<T> {
    pub fn effective_radius(&self) -> Result<Option<T>, FixedPointError> {
        match &self.effective_jacobian {
            Some(j) => Ok(Some(spectral_radius(j, T::of(EIGEN_TOL), EIGEN_MAX_ITER)?)),
            None => Ok(None),
        }
    }
}

/// `θ' = θ − lr·G⁻¹·∇` with a diagonal preconditioner `G`.
///
/// Only field arithmetic is used, so this is exact over rationals. When the
/// Hessian `H` of a quadratic test loss is given, the effective iteration
/// matrix `J_eff = I − lr·G⁻¹H` is returned as well.
pub fn preconditioned_step<T: Clone + Num + PartialOrd>(
    theta: &[T],
    grad: &[T],
    precond: &[T],
    lr: T,
    hessian: Option<&Matrix<T>>,
) -> Result<PreconditionedStep<T>, FixedPointError> {
    let n = theta.len();
    for len in [grad.len(), precond.len()] {
        if len != n {
            return Err(NnError::DimensionMismatch {
                expected: n,
                found: len,
            }
            .into());
        }
    }
    if let Some(i) = precond.iter().position(|g| !(*g > T::zero())) {
        return Err(FixedPointError::InvalidArgument(format!(
            "preconditioner entry {i} must be positive"
        )));
    }
    let new_theta = theta
        .iter()
        .zip(grad)
        .zip(precond)
        .map(|((p, g), d)| p.clone() - lr.clone() * g.clone() / d.clone())
        .collect();
    let effective_jacobian = match hessian {
        Some(h) => {
            if h.rows() != n || h.cols() != n {
                return Err(NnError::DimensionMismatch {
                    expected: n * n,
                    found: h.rows() * h.cols(),
                }
                .into());
            }
            let mut j: Matrix<T> = Matrix::identity(n);
            for i in 0..n {
                for k in 0..n {
                    let v = j[(i, k)].clone() - lr.clone() * h[(i, k)].clone() / precond[i].clone();
                    j[(i, k)] = v;
                }
            }
            Some(j)
        }
        None => None,
    };
    Ok(PreconditionedStep {
        theta: new_theta,
        effective_jacobian,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nncore::Network;

    #[test]
    fn zero_eps_is_not_acceleration() {
        let f = Network::linear(Matrix::from_diag(&[0.9, 0.4])).unwrap();
        let r = perturbation_accel(&f, &f, 0.0, &[0.0, 0.0]).unwrap();
        assert_eq!(r.rho_base, r.rho_perturbed);
        assert!(!r.accelerated);
        assert!(perturbation_accel(&f, &f, -0.1, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn identity_preconditioner_is_plain_gradient_step() {
        let theta = [1.0f64, -2.0, 0.5];
        let grad = [0.3, 0.1, -0.4];
        let step = preconditioned_step(&theta, &grad, &[1.0; 3], 0.1, None).unwrap();
        for ((p, g), q) in theta.iter().zip(&grad).zip(&step.theta) {
            assert_eq!(*q, p - 0.1 * g);
        }
        assert!(step.effective_jacobian.is_none());
    }

    #[test]
    fn unmatched_preconditioner_diverges_on_stiff_quadratic() {
        let h = Matrix::from_diag(&[1.0, 100.0]);
        let step = preconditioned_step(&[1.0, 1.0], &[1.0, 100.0], &[1.0, 1.0], 0.9, Some(&h)).unwrap();
        let rho: f64 = step.effective_radius().unwrap().unwrap();
        assert!((rho - 89.0).abs() < 1e-12);
    }

    #[test]
    fn non_positive_preconditioner_rejected() {
        assert!(preconditioned_step(&[1.0], &[1.0], &[0.0], 0.1, None).is_err());
        assert!(preconditioned_step(&[1.0], &[1.0], &[-1.0], 0.1, None).is_err());
    }
}
