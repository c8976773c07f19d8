//! Seed derivation.
//!
//! Every random component draws from its own ChaCha stream whose seed is the
//! first 8 bytes of `SHA-256(seed_le || component)`. Components are named with
//! `/`-separated paths such as `campaign/sensor3/off/7`, so re-running any part
//! of a study in isolation reproduces the exact stream used by a full run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

pub fn derive_seed(seed: u64, component: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(component.as_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn component_rng(seed: u64, component: &str) -> Rng {
    rng(derive_seed(seed, component))
}
