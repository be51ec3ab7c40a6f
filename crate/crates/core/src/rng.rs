//! Seeded randomness.
//!
//! Every random decision in the crate draws from a ChaCha20 stream
//! (`rand_chacha::ChaCha20Rng`) seeded with `seed_from_u64`. ChaCha20 output
//! is specified independently of platform and word size, so a seed pins the
//! stream everywhere. Sub-streams are derived by hashing the parent seed with a
//! label, which keeps them independent of iteration order.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

pub type HarnessRng = ChaCha20Rng;

pub fn seeded(seed: u64) -> HarnessRng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Derives a child seed from `seed` and a label (e.g. a frame id).
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 digest is 32 bytes"))
}
