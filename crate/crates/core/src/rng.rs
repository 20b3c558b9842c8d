//! Seed derivation. Every stochastic step draws from a ChaCha stream keyed
//! by the global seed and a stable label, so results never depend on
//! scheduling or iteration order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub fn child_seed(seed: u64, label: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((label.len() as u64).to_le_bytes());
    h.update(label.as_bytes());
    let mut out = [0u8; 32];
    out.copy_from_slice(&h.finalize());
    out
}

pub fn child_rng(seed: u64, label: &str) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(child_seed(seed, label))
}

/// A 64-bit seed for a derived stream.
pub fn child_u64(seed: u64, label: &str) -> u64 {
    let bytes = child_seed(seed, label);
    u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes"))
}
