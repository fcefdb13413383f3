//! Seeded random streams.
//!
//! Every stochastic component draws from a ChaCha8 generator whose key is
//! derived from a user seed plus a small tuple of counters, so results do not
//! depend on scheduling or on how work is split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator keyed by `seed` alone.
pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent generator for the stream `(seed, a, b)`.
pub fn stream(seed: u64, a: u64, b: u64) -> Rng {
    let mut key = [0u8; 32];
    let mut h = splitmix64(seed);
    for (i, word) in [seed, a, b, 0x5eed].iter().enumerate() {
        h = splitmix64(h ^ word.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        key[i * 8..(i + 1) * 8].copy_from_slice(&h.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
