use super::scalar::Scalar;
use super::NnError;

pub const DEFAULT_DAMPING: f64 = 1e-8;

/// Diagonal curvature proxy from gradient moments.
///
/// Bias-corrected exponential moving average of squared gradients (first
/// moment of `g²` as in Adam), plus `damping`. Every entry is at least
/// `damping`.
pub fn curvature_proxy<T: Scalar>(
    grad_history: &[Vec<T>],
    decay: T,
    damping: T,
) -> Result<Vec<T>, NnError> {
    let first = grad_history.first().ok_or(NnError::EmptyHistory)?;
    if !(decay > T::zero() && decay < T::one()) {
        return Err(NnError::InvalidArgument("decay must lie in (0, 1)".into()));
    }
    if !(damping >= T::zero()) {
        return Err(NnError::InvalidArgument("damping must be non-negative".into()));
    }
    let mut ema = vec![T::zero(); first.len()];
    let mut decay_pow = T::one();
    for g in grad_history {
        if g.len() != ema.len() {
            return Err(NnError::DimensionMismatch {
                expected: ema.len(),
                found: g.len(),
            });
        }
        for (m, &gi) in ema.iter_mut().zip(g) {
            *m = decay * *m + (T::one() - decay) * gi * gi;
        }
        decay_pow *= decay;
    }
    let correction = T::one() - decay_pow;
    Ok(ema.into_iter().map(|m| m / correction + damping).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_and_alternating_history_converge_to_square() {
        let g = vec![0.5, -2.0, 3.0];
        let constant = vec![g.clone(); 400];
        let alternating: Vec<Vec<f64>> = (0..400)
            .map(|t| g.iter().map(|v| if t % 2 == 0 { *v } else { -v }).collect())
            .collect();
        for hist in [constant, alternating] {
            let gp = curvature_proxy(&hist, 0.9, 1e-8).unwrap();
            for (p, v) in gp.iter().zip(&g) {
                assert!((p - (v * v + 1e-8)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_gradients_give_damping() {
        let gp = curvature_proxy(&vec![vec![0.0f64; 4]; 7], 0.99, 1e-8).unwrap();
        assert!(gp.iter().all(|&v| v == 1e-8));
    }

    #[test]
    fn errors() {
        assert!(matches!(
            curvature_proxy::<f64>(&[], 0.9, 1e-8),
            Err(NnError::EmptyHistory)
        ));
        assert!(curvature_proxy(&[vec![1.0f64]], 1.0, 1e-8).is_err());
        assert!(curvature_proxy(&[vec![1.0f64], vec![1.0, 2.0]], 0.5, 1e-8).is_err());
    }
}
