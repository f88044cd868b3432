//! Fixtures shared by the benchmarks.

use polaron_core::{Interval, IntervalConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n` intervals with uniform starts on `[0, horizon)` and lengths up to `max_len`, plus marks in `[0, 5)`.
pub fn random_marked(n: usize, horizon: f64, max_len: f64, seed: u64) -> (IntervalConfig, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let intervals = (0..n)
        .map(|_| {
            let s = horizon * rng.random::<f64>();
            Interval::new(s, s + max_len * (0.05 + 0.95 * rng.random::<f64>()))
        })
        .collect();
    let marks = (0..n).map(|_| 5.0 * rng.random::<f64>()).collect();
    (IntervalConfig::new(intervals), marks)
}
