//! Stable seed derivation.
//!
//! Every random stream in the simulator is seeded from the experiment's
//! master seed through [`derive_seed`]. The derivation is the first eight
//! bytes (little-endian) of
//!
//! ```text
//! SHA-256( master as u64 LE || label UTF-8 || 0x00 || idx_0 as u64 LE || idx_1 ... )
//! ```
//!
//! so it never depends on global state, thread scheduling or the clock.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub fn derive_seed(master: u64, label: &str, indices: &[u64]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(label.as_bytes());
    hasher.update([0u8]);
    for idx in indices {
        hasher.update(idx.to_le_bytes());
    }
    let digest = hasher.finalize();
    let mut word = [0u8; 8];
    word.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(word)
}

/// The RNG used for every stream in the crate.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
