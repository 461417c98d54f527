//! Seeded random streams. Each named purpose (weight init, shuffling,
//! latent sampling, clustering) gets its own ChaCha stream derived from
//! the run seed, so changing how one consumer draws never perturbs the
//! others.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use sha2::{Digest, Sha256};

/// Derive an independent ChaCha stream from `seed` and a purpose label.
pub fn stream(seed: u64, label: &str) -> ChaCha12Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update([0u8]);
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha12Rng::from_seed(key)
}
