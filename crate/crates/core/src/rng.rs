//! Seeded random streams. Every consumer draws from its own ChaCha stream so
//! that adding draws in one place never shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const STREAM_RANDOM_PHASE: u64 = 1;
pub const STREAM_PROPOSALS: u64 = 2;
pub const STREAM_EVALUATION: u64 = 3;
pub const STREAM_PROBES: u64 = 4;
pub const STREAM_DATA: u64 = 5;
pub const STREAM_INIT: u64 = 6;
pub const STREAM_BENCH: u64 = 7;

pub fn seeded(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derives an independent seed for item `index` of a family keyed by `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
