//! Deterministic random substreams.
//!
//! Every random draw in the crate comes from a ChaCha stream selected by a
//! base seed plus an ordered list of integer tags (purpose, sweep point,
//! trial, transmission, ...). Streams with different tags are independent,
//! so work can be split across threads without changing any number.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub type StreamRng = ChaCha12Rng;

/// Stream tags for the different consumers of randomness.
pub mod tag {
    pub const COMBINER: u64 = 1;
    pub const NOISE: u64 = 2;
    pub const PATH_PHASE: u64 = 3;
    pub const MASK: u64 = 4;
    pub const RESTART: u64 = 5;
    pub const TRIAL: u64 = 6;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `seed` and `tags`.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(seed), |acc, &t| splitmix64(acc ^ splitmix64(t.wrapping_add(0x632B_E59B_D9B4_E019))))
}

/// Opens the substream keyed by `(seed, tags)`.
pub fn substream(seed: u64, tags: &[u64]) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(seed, tags))
}
