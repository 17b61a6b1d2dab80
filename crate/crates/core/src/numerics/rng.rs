//! Seeded random streams.
//!
//! All randomness flows through [`Rng`], a ChaCha8 generator. Independent
//! streams are addressed by `(seed, index)` so that batched work can be split
//! or reordered without changing any draw.

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::tensor::Tensor;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream `index` under `seed`.
pub fn stream(seed: u64, index: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Derives a child seed; used to hand one generator's entropy to a sub-task.
pub fn fork(rng: &mut Rng) -> u64 {
    rng.random()
}

pub fn normal(rng: &mut Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn uniform(rng: &mut Rng) -> f64 {
    rng.random()
}

/// Index in `0..n`.
pub fn below(rng: &mut Rng, n: usize) -> usize {
    rng.random_range(0..n)
}

/// `[rows, cols]` matrix of i.i.d. standard normals.
pub fn normal_matrix(rng: &mut Rng, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols).map(|_| normal(rng)).collect();
    Tensor::from_parts(vec![rows, cols], data)
}
