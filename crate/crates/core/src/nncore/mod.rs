//! Dense network substrate shared by every experiment.
//!
//! Everything here is generic over [`Scalar`] (`f32`/`f64`); [`Matrix`] itself
//! only needs field arithmetic and is reused with exact rationals.

pub mod curvature;
pub mod fd;
pub mod grad;
pub mod linalg;
pub mod network;
pub mod scalar;

pub use curvature::curvature_proxy;
pub use grad::{
    backprop, descend, loss_grad, loss_value, Backward, CrossEntropy, KlToTarget, LossGrad,
    OutputLoss, ResidualLoss, Sample, Scaled, SquaredError, Target,
};
pub use linalg::{eigenvalues, spectral_radius, Eigenvalue, Matrix};
pub use network::{forward, jacobian, layer_jacobians, Activation, Layer, Network, Trajectory};
pub use scalar::Scalar;

/// Power-iteration style defaults: deflation tolerance and sweep budget.
pub const EIGEN_TOL: f64 = 1e-9;
pub const EIGEN_MAX_ITER: usize = 10_000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NnError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("layer {layer} expects input width {found} but previous layer emits {expected}")]
    LayerChain {
        layer: usize,
        expected: usize,
        found: usize,
    },
    #[error("softmax head only allowed on the final layer (found on layer {0})")]
    SoftmaxNotFinal(usize),
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric positive definite")]
    NotPositiveDefinite,
    #[error("{what} did not converge within {iterations} iterations")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
    },
    #[error("empty batch")]
    EmptyBatch,
    #[error("empty gradient history")]
    EmptyHistory,
    #[error("loss expects a {0} target")]
    TargetKind(&'static str),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("{0}")]
    InvalidArgument(String),
}
