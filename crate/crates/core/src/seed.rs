//! Deterministic seed splitting.
//!
//! All randomness derives from one user-visible 64-bit seed. Each consumer
//! gets its own generator keyed by `(seed, stream, index)`, so work items can
//! be generated in any order or in parallel without changing the output.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags; distinct per subsystem.
pub mod stream {
    pub const SERIES: u64 = 0x5e41_e500;
    pub const REAL_BATCH: u64 = 0xba7c_0001;
    pub const GEN_BATCH: u64 = 0xba7c_0002;
    pub const STUDY_DATA: u64 = 0x57d9_0001;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed for `(stream, index)` from `seed`.
pub fn derive(seed: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed ^ splitmix64(stream)).wrapping_add(index))
}

pub fn rng(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, stream, index))
}
