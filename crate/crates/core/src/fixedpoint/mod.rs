//! Fixed-point residual training, iteration, enumeration and contraction analysis.

pub mod accel;
pub mod iterate;
pub mod map;
pub mod train;

pub use accel::{perturbation_accel, preconditioned_step, AccelerationReport, PreconditionedStep};
pub use iterate::{
    analyse_point, contraction_report, enumerate_fixed_points, iterate, map_residual, residual,
    ContractionReport, EnumeratedPoint, Enumeration, FixedPointReport, IterateOptions,
    IterationRun, NoiseSpec, StageContraction, Verdict, DIVERGENCE_BOUND, MERGE_FACTOR,
};
pub use map::{Perturbed, Shifted, SquareMap};
pub use train::{
    lagrangian_gradient, lagrangian_train, mean_residual, train_residual, LagrangianConfig,
    LagrangianRun, LagrangianState, ResidualTraining,
};

use crate::nncore::NnError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FixedPointError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("residual {residual:e} is not below {bound:e}; not near a fixed point")]
    NotNearFixedPoint { residual: f64, bound: f64 },
    #[error("loss became non-finite at step {step}")]
    NonFiniteLoss { step: usize },
    #[error("dual variable overflowed at step {step} (lambda = {lambda:e})")]
    LambdaOverflow { step: usize, lambda: f64 },
    #[error("{0}")]
    InvalidArgument(String),
}
