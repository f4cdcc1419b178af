//! Keyed random streams: one independent generator per
//! `(master seed, trial index, stream tag)`, so parallel trials never share
//! state and results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags used by the library.
pub mod stream {
    pub const GENSET: u64 = 1;
    pub const LATTICE: u64 = 2;
    pub const THETA_MC: u64 = 3;
    pub const COVERING: u64 = 4;
}

pub fn keyed_rng(seed: u64, index: u64, tag: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&index.to_le_bytes());
    key[16..24].copy_from_slice(&tag.to_le_bytes());
    key[24..].copy_from_slice(b"cyclemix");
    ChaCha8Rng::from_seed(key)
}
