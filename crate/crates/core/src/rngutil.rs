//! Seed derivation helpers.
//!
//! Every stochastic routine takes an explicit seed and derives independent
//! ChaCha streams from it. Substream seeds are produced with splitmix64 so
//! that `(seed, tag)` pairs map to well-separated states regardless of the
//! order in which streams are created.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub(crate) fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a seed with a stream tag into a fresh generator.
pub(crate) fn stream(seed: u64, tag: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(splitmix64(seed ^ splitmix64(tag)))
}

/// Per-replication stream: `hash(master_seed, horizon, replication)`.
pub(crate) fn replication_stream(master_seed: u64, horizon: u64, replication: u64) -> ChaCha12Rng {
    let mixed = splitmix64(master_seed) ^ splitmix64(horizon.wrapping_mul(0x517c_c1b7_2722_0a95))
        ^ splitmix64(replication.wrapping_mul(0x2545_f491_4f6c_dd1d));
    ChaCha12Rng::seed_from_u64(splitmix64(mixed))
}
