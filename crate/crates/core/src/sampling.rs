//! Seeded Gaussian sampling helpers.
//!
//! All randomness in this crate flows through a counter-based ChaCha stream
//! so that a seed pins every generated matrix bit-for-bit.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Deterministic generator for the given seed.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Matrix with i.i.d. standard normal entries, filled row-major.
pub fn gaussian_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = rng.sample(StandardNormal);
        }
    }
    m
}

/// Symmetric matrix `(M + Mᵀ)/2` from i.i.d. standard normal `M`.
pub fn gaussian_symmetric(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let m = gaussian_matrix(n, n, rng);
    (&m + m.transpose()) * 0.5
}
