//! Numerical laboratory for fixed-point dynamics of small dense networks.

pub mod boundary;
pub mod covers;
pub mod datagen;
pub mod federation;
pub mod fixedpoint;
pub mod nncore;
pub mod plasticity;
pub mod stochastic;

pub use nncore::{Matrix, Network, Scalar, Trajectory};

pub type Network64 = nncore::Network<f64>;
pub type Network32 = nncore::Network<f32>;
pub type Matrix64 = nncore::Matrix<f64>;
pub type Matrix32 = nncore::Matrix<f32>;
pub type Trajectory64 = nncore::Trajectory<f64>;
pub type Sample64 = nncore::Sample<f64>;
pub type FixedPointReport64 = fixedpoint::FixedPointReport<f64>;
