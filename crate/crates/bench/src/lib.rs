//! Shared fixtures for the criterion benchmarks.

use optex::instances;
use optex::ValidatedParams;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The no-jump and single-exponential reference sets.
pub fn reference_sets() -> [(&'static str, ValidatedParams); 2] {
    [("no_jumps", instances::no_jumps()), ("single_exponential", instances::single_exponential())]
}

/// `n` reproducible random parameter sets with mixture orders up to `max_order`.
pub fn random_sets(n: usize, max_order: usize, seed: u64) -> Vec<ValidatedParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| instances::random_params(&mut rng, max_order)).collect()
}
