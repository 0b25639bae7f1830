//! Shared fixtures for the benchmarks.

use oob_bands::Dataset;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n` rows of `p` uniform features with a noisy additive response.
pub fn synthetic(n: usize, p: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..p).map(|_| rng.random()).collect()).collect();
    let y = rows
        .iter()
        .map(|r| r.iter().enumerate().map(|(j, v)| v * (j % 3) as f64).sum::<f64>() + rng.random::<f64>())
        .collect();
    Dataset::from_rows(&rows, y).expect("finite synthetic data")
}
