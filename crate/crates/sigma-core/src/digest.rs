//! Content digests used for version hashes and replay comparison.

use sha2::{Digest, Sha256};

/// Hex-encoded SHA-256 of the given bytes.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hex::encode(hasher.finalize())
}

/// Short 12-hex-character prefix, used in contribution identifiers.
pub fn short_digest(bytes: &[u8]) -> String {
    sha256_hex(bytes)[..12].to_string()
}

/// Derives a 32-byte seed for a named sub-stream of a run seed. Stable
/// mixing guarantees per-node random streams do not perturb each other.
pub fn derive_seed(root_seed: u64, scope: &str) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(root_seed.to_le_bytes());
    hasher.update(scope.as_bytes());
    hasher.finalize().into()
}
