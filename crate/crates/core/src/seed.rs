//! Deterministic seed forking.
//!
//! Every random stream in the pipeline derives from one root seed and a fixed
//! label, so adding a new consumer never perturbs existing streams.

use sha2::{Digest, Sha256};

/// Derives a child seed from `root` and `label`.
pub fn fork(root: u64, label: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(root.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}
