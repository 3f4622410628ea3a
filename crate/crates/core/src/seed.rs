//! Named sub-seeds derived from one top-level seed.

use sha2::{Digest, Sha256};

/// First eight bytes (little endian) of `sha256(seed_le || label)`.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(label.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 digest has 32 bytes"))
}
