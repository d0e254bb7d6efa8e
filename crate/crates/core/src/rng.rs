//! Seeded, platform-independent randomness.
//!
//! Every random draw in the crate comes from a [`ChaCha8Rng`] keyed by the
//! SHA-256 digest of `(label, seed)`. Two operations with different labels
//! never share a stream, so trials and sub-steps can run in any order or in
//! parallel without changing their output.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

/// Identifies one derived substream; recorded in run provenance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubstreamId {
    pub label: String,
    pub seed: u64,
    /// First 8 bytes of the derived key, hex encoded.
    pub key: String,
}

fn derive_key(label: &str, seed: u64) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update((label.len() as u64).to_le_bytes());
    hasher.update(label.as_bytes());
    hasher.update(seed.to_le_bytes());
    hasher.finalize().into()
}

/// Generator for the substream `(label, seed)`.
pub fn substream(label: &str, seed: u64) -> StreamRng {
    ChaCha8Rng::from_seed(derive_key(label, seed))
}

pub fn substream_id(label: &str, seed: u64) -> SubstreamId {
    let key = derive_key(label, seed);
    SubstreamId { label: label.to_string(), seed, key: key[..8].iter().map(|b| format!("{b:02x}")).collect() }
}

/// Derives a child seed from a parent seed and an ordered list of
/// components. Used to give every sweep point and trial its own seed.
pub fn derive_seed(label: &str, parent: u64, parts: &[u64]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update((label.len() as u64).to_le_bytes());
    hasher.update(label.as_bytes());
    hasher.update(parent.to_le_bytes());
    for p in parts {
        hasher.update(p.to_le_bytes());
    }
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}
