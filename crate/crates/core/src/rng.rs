//! Deterministic per-task random streams.
//!
//! Every parallelisable unit of work (an LTS start, an SRMR start, a bootstrap
//! round, a benchmark replicate) draws from its own stream derived from
//! `(seed, domain, index)`, so results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream domains, kept distinct so different consumers of one seed never share draws.
pub mod domain {
    pub const LTS_START: u64 = 0x1157;
    pub const SRMR_START: u64 = 0x5a3a;
    pub const HMR_INIT: u64 = 0x4a1e;
    pub const TAU: u64 = 0x7a0;
    pub const BOOTSTRAP: u64 = 0xb007;
    pub const GENERATE: u64 = 0x6e4e;
    pub const TYPE1: u64 = 0x7e01;
    pub const TYPE2: u64 = 0x7e02;
    pub const REPLICATE: u64 = 0x4e91;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed, a domain tag and an index.
pub fn derive_seed(seed: u64, domain: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed ^ splitmix64(domain)) ^ index.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

pub fn stream(seed: u64, domain: u64, index: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, domain, index))
}
