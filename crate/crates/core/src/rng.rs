//! Seed derivation for deterministic, order-independent random streams.
//!
//! Every randomized stage owns a ChaCha stream derived from `(base seed,
//! stage tag, indices...)` so results do not depend on scheduling or on how
//! many draws earlier stages consumed.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mix a base seed with a stage tag and indices into an independent sub-seed.
pub fn derive_seed(base: u64, tag: &str, indices: &[u64]) -> u64 {
    let mut state = splitmix64(base ^ GOLDEN_GAMMA);
    for byte in tag.bytes() {
        state = splitmix64(state.wrapping_add(byte as u64).wrapping_mul(GOLDEN_GAMMA));
    }
    for &ix in indices {
        state = splitmix64(state ^ ix.wrapping_mul(GOLDEN_GAMMA));
    }
    state
}

/// Deterministic RNG stream for a given seed.
pub fn stream(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
