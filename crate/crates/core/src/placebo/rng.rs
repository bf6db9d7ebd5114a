//! Deterministic random number streams.
//!
//! Every replication gets its own counter-derived ChaCha8 stream keyed by
//! `(seed, replication index)`, so draws never depend on how replications are
//! scheduled across workers. Normal variates use the ziggurat sampler from
//! `rand_distr`; the samplers are fixed per release, and bit reproducibility
//! is promised only within a build.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream for replication `index` of a run with the given seed.
pub fn replication_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Stream 0 is reserved for run-level draws.
    rng.set_stream(index + 1);
    rng
}

/// Run-level stream (share synthesis, estimand integration, ...).
pub fn run_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    rng
}
