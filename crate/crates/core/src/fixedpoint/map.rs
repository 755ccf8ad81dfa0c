use crate::nncore::{jacobian, layer_jacobians, Matrix, Network, NnError, Scalar};

/// A map `ℝⁿ → ℝⁿ` with an analytic Jacobian.
pub trait SquareMap<T: Scalar> {
    fn dim(&self) -> usize;

    fn apply(&self, x: &[T]) -> Result<Vec<T>, NnError>;

    fn jacobian(&self, x: &[T]) -> Result<Matrix<T>, NnError>;

    /// Jacobians of the individual stages composing the map, in application order.
    fn stage_jacobians(&self, x: &[T]) -> Result<Vec<Matrix<T>>, NnError> {
        Ok(vec![self.jacobian(x)?])
    }
}

impl<T: Scalar> SquareMap<T> for Network<T> {
    fn dim(&self) -> usize {
        self.input_dim()
    }

    fn apply(&self, x: &[T]) -> Result<Vec<T>, NnError> {
        self.eval(x)
    }

    fn jacobian(&self, x: &[T]) -> Result<Matrix<T>, NnError> {
        jacobian(self, x)
    }

    fn stage_jacobians(&self, x: &[T]) -> Result<Vec<Matrix<T>>, NnError> {
        layer_jacobians(self, x)
    }
}

impl<T: Scalar, M: SquareMap<T> + ?Sized> SquareMap<T> for &M {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn apply(&self, x: &[T]) -> Result<Vec<T>, NnError> {
        (**self).apply(x)
    }

    fn jacobian(&self, x: &[T]) -> Result<Matrix<T>, NnError> {
        (**self).jacobian(x)
    }

    fn stage_jacobians(&self, x: &[T]) -> Result<Vec<Matrix<T>>, NnError> {
        (**self).stage_jacobians(x)
    }
}

/// `f_ε(x) = f(x) + ε·g(x)`.
#[derive(Debug, Clone)]
pub struct Perturbed<F, G, T> {
    pub base: F,
    pub direction: G,
    pub eps: T,
}

impl<T: Scalar, F: SquareMap<T>, G: SquareMap<T>> SquareMap<T> for Perturbed<F, G, T> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn apply(&self, x: &[T]) -> Result<Vec<T>, NnError> {
        let f = self.base.apply(x)?;
        let g = self.direction.apply(x)?;
        Ok(f.iter().zip(&g).map(|(&a, &b)| a + self.eps * b).collect())
    }

    fn jacobian(&self, x: &[T]) -> Result<Matrix<T>, NnError> {
        let jf = self.base.jacobian(x)?;
        let jg = self.direction.jacobian(x)?;
        jf.add(&jg.scale(self.eps))
    }
}

/// `x ↦ f(x) + shift`, the map whose fixed point is the average fixed point
/// under a systematic perturbation `shift`.
#[derive(Debug, Clone)]
pub struct Shifted<F, T> {
    pub base: F,
    pub shift: Vec<T>,
}

impl<T: Scalar, F: SquareMap<T>> SquareMap<T> for Shifted<F, T> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn apply(&self, x: &[T]) -> Result<Vec<T>, NnError> {
        Ok(self
            .base
            .apply(x)?
            .iter()
            .zip(&self.shift)
            .map(|(&a, &b)| a + b)
            .collect())
    }

    fn jacobian(&self, x: &[T]) -> Result<Matrix<T>, NnError> {
        self.base.jacobian(x)
    }

    fn stage_jacobians(&self, x: &[T]) -> Result<Vec<Matrix<T>>, NnError> {
        self.base.stage_jacobians(x)
    }
}

pub(crate) fn require_square<T: Scalar>(net: &Network<T>) -> Result<(), NnError> {
    if net.is_square() {
        Ok(())
    } else {
        Err(NnError::NotSquare {
            rows: net.output_dim(),
            cols: net.input_dim(),
        })
    }
}
