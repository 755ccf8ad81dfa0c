use serde::{Deserialize, Serialize};

use super::iterate::residual;
use super::map::require_square;
use super::FixedPointError;
use crate::nncore::grad::{loss_grad, LossGrad, ResidualLoss, Sample};
use crate::nncore::scalar::norm;
use crate::nncore::{Network, NnError, Scalar};

/// Lambda magnitudes beyond this are reported as overflow.
pub const LAMBDA_LIMIT: f64 = 1e12;

#[derive(Debug, Clone)]
pub struct ResidualTraining<T> {
    pub net: Network<T>,
    /// Mean squared residual before each step, then once more after the last.
    pub loss_curve: Vec<T>,
}

fn unlabeled<T: Scalar>(data: &[Vec<T>]) -> Vec<Sample<T>> {
    data.iter().map(|x| Sample::unlabeled(x.clone())).collect()
}

fn energy_grad<T: Scalar>(
    net: &Network<T>,
    batch: &[Sample<T>],
    step: usize,
) -> Result<LossGrad<T>, FixedPointError> {
    loss_grad(net, &ResidualLoss, batch).map_err(|e| match e {
        NnError::NonFinite("loss") => FixedPointError::NonFiniteLoss { step },
        other => other.into(),
    })
}

/// Mean of `‖f(x) − x‖` over the data.
pub fn mean_residual<T: Scalar>(net: &Network<T>, data: &[Vec<T>]) -> Result<T, FixedPointError> {
    if data.is_empty() {
        return Err(NnError::EmptyBatch.into());
    }
    let mut total = T::zero();
    for x in data {
        total += residual(net, x)?.1;
    }
    Ok(total / T::of(data.len() as f64))
}

/// Full-batch gradient descent on `E_x ‖f_θ(x) − x‖²`.
pub fn train_residual<T: Scalar>(
    net: &Network<T>,
    data: &[Vec<T>],
    steps: usize,
    lr: T,
) -> Result<ResidualTraining<T>, FixedPointError> {
    require_square(net)?;
    let batch = unlabeled(data);
    if batch.is_empty() {
        return Err(NnError::EmptyBatch.into());
    }
    let mut net = net.clone();
    let mut theta = net.params();
    let mut loss_curve = Vec::with_capacity(steps + 1);
    for step in 0..steps {
        let lg = energy_grad(&net, &batch, step)?;
        loss_curve.push(lg.value);
        for (p, &g) in theta.iter_mut().zip(&lg.grad) {
            *p -= lr * g;
        }
        net.set_params(&theta)
            .map_err(|_| FixedPointError::NonFiniteLoss { step })?;
    }
    loss_curve.push(energy_grad(&net, &batch, steps)?.value);
    Ok(ResidualTraining { net, loss_curve })
}

/// Weight-norm budget constraint `g(θ) = ‖θ‖² − c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LagrangianConfig<T> {
    pub budget: T,
    pub steps: usize,
    pub lr_theta: T,
    pub lr_lambda: T,
    /// Stop once `‖∇_{(θ,λ)} L‖` falls below this.
    pub tol: T,
    pub lambda0: T,
    pub freeze_lambda: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagrangianState<T> {
    pub step: usize,
    pub theta: Vec<T>,
    pub lambda: T,
    pub constraint_value: T,
    pub energy: T,
    /// `‖(∇_θ L, ∇_λ L)‖` at this state.
    pub stationarity: T,
}

#[derive(Debug, Clone)]
pub struct LagrangianRun<T> {
    pub net: Network<T>,
    pub history: Vec<LagrangianState<T>>,
    pub converged: bool,
}

impl<T: Scalar> LagrangianRun<T> {
    pub fn last(&self) -> &LagrangianState<T> {
        self.history.last().expect("history holds the initial state")
    }
}

/// `L(θ, λ) = E‖f_θ(x) − x‖² + λ(‖θ‖² − c)` and its gradient in `(θ, λ)`.
pub fn lagrangian_gradient<T: Scalar>(
    net: &Network<T>,
    data: &[Vec<T>],
    budget: T,
    lambda: T,
) -> Result<(T, Vec<T>, T), FixedPointError> {
    let batch = unlabeled(data);
    let lg = energy_grad(net, &batch, 0)?;
    let theta = net.params();
    let g = theta.iter().map(|&v| v * v).sum::<T>() - budget;
    let two = T::of(2.0);
    let grad_theta = lg
        .grad
        .iter()
        .zip(&theta)
        .map(|(&ge, &p)| ge + two * lambda * p)
        .collect();
    Ok((lg.value + lambda * g, grad_theta, g))
}

/// Alternating descent in `θ` on `E + λ·g` and ascent in `λ` on `g`.
///
/// History holds the state before every update plus the final state.
pub fn lagrangian_train<T: Scalar>(
    net: &Network<T>,
    data: &[Vec<T>],
    cfg: &LagrangianConfig<T>,
) -> Result<LagrangianRun<T>, FixedPointError> {
    require_square(net)?;
    if !(cfg.budget > T::zero()) {
        return Err(FixedPointError::InvalidArgument("budget c must be positive".into()));
    }
    let batch = unlabeled(data);
    if batch.is_empty() {
        return Err(NnError::EmptyBatch.into());
    }
    let two = T::of(2.0);
    let mut net = net.clone();
    let mut theta = net.params();
    let mut lambda = cfg.lambda0;
    let mut history = Vec::with_capacity(cfg.steps + 1);
    let mut converged = false;
    for step in 0..=cfg.steps {
        let lg = energy_grad(&net, &batch, step)?;
        let g = theta.iter().map(|&v| v * v).sum::<T>() - cfg.budget;
        let grad_theta: Vec<T> = lg
            .grad
            .iter()
            .zip(&theta)
            .map(|(&ge, &p)| ge + two * lambda * p)
            .collect();
        let lambda_grad = if cfg.freeze_lambda { T::zero() } else { g };
        let stationarity = (norm(&grad_theta).powi(2) + lambda_grad * lambda_grad).sqrt();
        history.push(LagrangianState {
            step,
            theta: theta.clone(),
            lambda,
            constraint_value: g,
            energy: lg.value,
            stationarity,
        });
        if stationarity < cfg.tol {
            converged = true;
            break;
        }
        if step == cfg.steps {
            break;
        }
        for (p, &gt) in theta.iter_mut().zip(&grad_theta) {
            *p -= cfg.lr_theta * gt;
        }
        net.set_params(&theta)
            .map_err(|_| FixedPointError::NonFiniteLoss { step })?;
        if !cfg.freeze_lambda {
            let g_new = theta.iter().map(|&v| v * v).sum::<T>() - cfg.budget;
            lambda += cfg.lr_lambda * g_new;
            if !lambda.is_finite() || lambda.abs() > T::of(LAMBDA_LIMIT) {
                return Err(FixedPointError::LambdaOverflow {
                    step,
                    lambda: lambda.as_f64(),
                });
            }
        }
    }
    Ok(LagrangianRun {
        net,
        history,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nncore::{Activation, Matrix};

    #[test]
    fn zero_residual_data_stays_at_zero() {
        let net = Network::<f64>::random(&[2, 4, 2], &[Activation::Tanh, Activation::Tanh], 1.0, 2)
            .unwrap();
        let out = train_residual(&net, &[vec![0.0, 0.0]], 50, 0.1).unwrap();
        assert!(out.loss_curve.iter().all(|&l| l == 0.0));
        assert_eq!(out.net, net);
    }

    #[test]
    fn non_square_is_rejected() {
        let net = Network::linear(Matrix::<f64>::zeros(3, 2)).unwrap();
        assert!(train_residual(&net, &[vec![0.0, 0.0]], 1, 0.1).is_err());
    }

    #[test]
    fn exploding_learning_rate_reports_step() {
        let net = Network::linear(Matrix::from_diag(&[0.5f64, 0.5])).unwrap();
        let err = train_residual(&net, &[vec![100.0, 100.0]], 500, 10.0).unwrap_err();
        assert!(matches!(err, FixedPointError::NonFiniteLoss { .. }));
    }

    #[test]
    fn budget_equal_to_initial_norm_starts_feasible() {
        let net = Network::linear(Matrix::from_diag(&[0.8f64, 0.8])).unwrap();
        let data = vec![vec![0.5, -0.2], vec![0.1, 0.9]];
        let cfg = LagrangianConfig {
            budget: net.param_norm_sq(),
            steps: 20,
            lr_theta: 0.05,
            lr_lambda: 0.05,
            tol: 1e-12,
            lambda0: 0.0,
            freeze_lambda: false,
        };
        let run = lagrangian_train(&net, &data, &cfg).unwrap();
        let first = &run.history[0];
        assert_eq!(first.constraint_value, 0.0);
        assert_eq!(first.lambda, 0.0);
        assert!(run.last().energy < first.energy);
        assert!(run.history.iter().all(|s| s.lambda.abs() < 0.1));
    }

    #[test]
    fn lambda_overflow_is_reported() {
        let net = Network::linear(Matrix::from_diag(&[1.0f64])).unwrap();
        let cfg = LagrangianConfig {
            budget: 1e-3,
            steps: 100,
            lr_theta: 0.0,
            lr_lambda: 1e13,
            tol: 1e-12,
            lambda0: 0.0,
            freeze_lambda: false,
        };
        assert!(matches!(
            lagrangian_train(&net, &[vec![1.0]], &cfg),
            Err(FixedPointError::LambdaOverflow { .. })
        ));
    }
}
