//! Seed derivation.
//!
//! All randomness in the crate flows through [`rng`], a `ChaCha8Rng` from
//! `rand_chacha` 0.9. Child seeds are derived from a parent seed by hashing
//! `(domain, parent, index)` with SHA-256, so derived streams never depend on
//! call order or thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Identifier recorded in manifests so results can be tied to a generator.
pub const PRNG_ID: &str = "rand_chacha-0.9/ChaCha8Rng";

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derive a child seed for stream `index` under `domain`.
pub fn derive(parent: u64, domain: &str, index: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(b"bias-bench/seed/");
    hasher.update(domain.as_bytes());
    hasher.update([0u8]);
    hasher.update(parent.to_le_bytes());
    hasher.update(index.to_le_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

/// Seed for experiment run `run_index`.
pub fn run_seed(master_seed: u64, run_index: u64) -> u64 {
    derive(master_seed, "run", run_index)
}
