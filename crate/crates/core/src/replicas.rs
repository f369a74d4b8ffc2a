//! Seeded replica loops.
//!
//! Replica `k` draws from `ChaCha8Rng` seeded with the master seed on stream
//! `k`, so results do not depend on the number of worker threads.

use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Random stream of replica `index`.
pub fn stream(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Run `f` for replicas `0..n` in parallel, results in replica order.
pub fn run<T, F>(master_seed: u64, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64, &mut ChaCha8Rng) -> T + Sync,
{
    run_range(master_seed, 0..n as u64, f)
}

/// Run `f` for the given replica indices in parallel, results in index order.
pub fn run_range<T, F>(master_seed: u64, indices: Range<u64>, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64, &mut ChaCha8Rng) -> T + Sync,
{
    indices
        .into_par_iter()
        .map(|k| {
            let mut rng = stream(master_seed, k);
            f(k, &mut rng)
        })
        .collect()
}

/// Fallible variant of [`run`]; the first error in replica order wins.
pub fn try_run<T, E, F>(master_seed: u64, n: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(u64, &mut ChaCha8Rng) -> Result<T, E> + Sync,
{
    run(master_seed, n, f).into_iter().collect()
}
