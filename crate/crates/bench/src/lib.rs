//! Seeded input generators for the benchmarks.

use evspace_core::matrix::BinaryMatrix;
use evspace_core::nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn binary_matrix(rows: usize, cols: usize, density: f64, seed: u64) -> BinaryMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    BinaryMatrix::from_fn(rows, cols, |_, _| rng.random_bool(density))
}

/// Export values with roughly `density` nonzero cells.
pub fn export_values(rows: usize, cols: usize, density: f64, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(rows, cols, |_, _| {
        if rng.random_bool(density) {
            rng.random_range(1.0..1e6)
        } else {
            0.0
        }
    })
}

/// Undirected edges `(p, q, length)` with lengths `1 / phi`.
pub fn weighted_edges(n: usize, density: f64, seed: u64) -> Vec<(usize, usize, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for p in 0..n {
        for q in p + 1..n {
            if rng.random_bool(density) {
                edges.push((p, q, 1.0 / rng.random_range(0.01..=1.0)));
            }
        }
    }
    edges
}

/// Design matrix and outcomes from a logistic model with the given slopes.
pub fn logistic_data(n: usize, beta: &[f64], intercept: f64, seed: u64) -> (DMatrix<f64>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = beta.len();
    let x = DMatrix::from_fn(n, k, |_, _| rng.random_range(-2.0..2.0));
    let y = (0..n)
        .map(|i| {
            let eta = intercept + (0..k).map(|j| beta[j] * x[(i, j)]).sum::<f64>();
            rng.random_bool(1.0 / (1.0 + (-eta).exp()))
        })
        .collect();
    (x, y)
}
