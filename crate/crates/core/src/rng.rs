//! Seeded randomness.
//!
//! Every random draw in the crate comes from [`stream`]: a ChaCha20
//! generator keyed by the run seed, with an independent stream per
//! consumer. Changing the generator or a stream id changes results and is
//! a breaking change to recorded runs.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub type Rng = ChaCha20Rng;

/// Recorded in run manifests and serialized models.
pub const PRNG_NAME: &str = "chacha20/stream-v1";

/// Stream ids of the crate's random consumers.
pub mod streams {
    pub const INIT: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const SHUFFLE: u64 = 3;
    pub const FOLDS: u64 = 4;
    pub const TSNE: u64 = 5;
    pub const SYNTH: u64 = 6;
    pub const REPRO_SPLIT: u64 = 7;
    pub const PERMUTE: u64 = 8;
}

pub fn stream(seed: u64, stream_id: u64) -> Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

/// Derives a child seed, e.g. one per cross-validation fold.
pub fn child_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
