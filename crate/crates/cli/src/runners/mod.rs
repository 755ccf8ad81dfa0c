pub mod boundary;
pub mod covers;
pub mod datagen;
pub mod federation;
pub mod fixedpoint;
pub mod plasticity;
pub mod stochastic;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Independent stream `k` of a run seed.
pub fn sub_seed(seed: u64, k: u64) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(k)
}

pub fn uniform_points(n: usize, dim: usize, lo: f64, hi: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (0..dim).map(|_| rng.random_range(lo..hi)).collect()).collect()
}

pub fn fmt(v: f64) -> String {
    format!("{v}")
}
