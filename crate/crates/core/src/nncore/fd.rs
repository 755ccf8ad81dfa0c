//! Central finite-difference oracles.
//!
//! These only call forward evaluation and loss values, never the backward
//! pass, so they stay independent of what they check.

use super::grad::{loss_value, OutputLoss, Sample};
use super::linalg::Matrix;
use super::network::Network;
use super::scalar::Scalar;
use super::NnError;

pub const DEFAULT_STEP: f64 = 1e-5;

/// Central-difference gradient of a scalar function.
pub fn gradient<T: Scalar>(
    f: impl Fn(&[T]) -> Result<T, NnError>,
    x: &[T],
    step: T,
) -> Result<Vec<T>, NnError> {
    let two = T::of(2.0);
    let mut probe = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + step;
        let up = f(&probe)?;
        probe[i] = orig - step;
        let down = f(&probe)?;
        probe[i] = orig;
        out.push((up - down) / (two * step));
    }
    Ok(out)
}

/// Central-difference Jacobian of a vector function, `J[i][j] = ∂f_i/∂x_j`.
pub fn jacobian_of<T: Scalar>(
    f: impl Fn(&[T]) -> Result<Vec<T>, NnError>,
    x: &[T],
    step: T,
) -> Result<Matrix<T>, NnError> {
    let two = T::of(2.0);
    let base = f(x)?;
    let mut j = Matrix::zeros(base.len(), x.len());
    let mut probe = x.to_vec();
    for col in 0..x.len() {
        let orig = probe[col];
        probe[col] = orig + step;
        let up = f(&probe)?;
        probe[col] = orig - step;
        let down = f(&probe)?;
        probe[col] = orig;
        for row in 0..base.len() {
            j[(row, col)] = (up[row] - down[row]) / (two * step);
        }
    }
    Ok(j)
}

/// Finite-difference gradient of the mean batch loss with respect to parameters.
pub fn loss_gradient<T: Scalar, L: OutputLoss<T> + ?Sized>(
    net: &Network<T>,
    loss: &L,
    batch: &[Sample<T>],
    step: T,
) -> Result<Vec<T>, NnError> {
    let theta = net.params();
    gradient(
        |p| loss_value(&net.with_params(p)?, loss, batch),
        &theta,
        step,
    )
}

/// Finite-difference input Jacobian of the network output.
pub fn network_jacobian<T: Scalar>(net: &Network<T>, x: &[T], step: T) -> Result<Matrix<T>, NnError> {
    jacobian_of(|p| net.eval(p), x, step)
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`; zero when both vanish.
pub fn relative_error<T: Scalar>(a: &[T], b: &[T]) -> T {
    let diff: T = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum::<T>()
        .sqrt();
    let scale = super::scalar::norm(a).max(super::scalar::norm(b));
    if scale == T::zero() {
        T::zero()
    } else {
        diff / scale
    }
}
