//! Stable seed derivation.

use sha2::{Digest, Sha256};

/// First 8 bytes (little endian) of `SHA-256(parent ‖ index ‖ label)`.
pub fn derive_seed(parent: u64, index: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(parent.to_le_bytes());
    h.update(index.to_le_bytes());
    h.update(label.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// Independent streams for one disorder realization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct RealizationSeeds {
    pub graph: u64,
    pub disorder: u64,
    pub state: u64,
    pub inputs: u64,
    pub encoding: u64,
}

impl RealizationSeeds {
    pub fn from_seed(seed: u64) -> Self {
        Self {
            graph: derive_seed(seed, 0, "graph"),
            disorder: derive_seed(seed, 0, "disorder"),
            state: derive_seed(seed, 0, "state"),
            inputs: derive_seed(seed, 0, "inputs"),
            encoding: derive_seed(seed, 0, "encoding"),
        }
    }
}
