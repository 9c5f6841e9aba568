//! Deterministic seed derivation.
//!
//! Every random quantity in the workspace is drawn from a ChaCha8 stream whose
//! 256-bit key is `SHA-256(tag || 0x1f || parts)`, where `tag` is an ASCII
//! domain label and `parts` are little-endian `u64` values. Streams with
//! different tags or parts are independent; a `(tag, parts)` pair always
//! produces the same byte stream, on every platform.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// 256-bit key for the stream identified by `(tag, parts)`.
pub fn derive_key(tag: &str, parts: &[u64]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(tag.as_bytes());
    hasher.update([0x1f]);
    for p in parts {
        hasher.update(p.to_le_bytes());
    }
    hasher.finalize().into()
}

/// Collapse `(tag, parts)` to a single sub-seed (first 8 key bytes, LE).
pub fn derive_u64(tag: &str, parts: &[u64]) -> u64 {
    let key = derive_key(tag, parts);
    u64::from_le_bytes(key[..8].try_into().unwrap())
}

/// A fresh generator positioned at the start of stream `(tag, parts)`.
pub fn stream(tag: &str, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(derive_key(tag, parts))
}
