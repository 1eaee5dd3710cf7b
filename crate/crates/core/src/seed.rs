//! Counter-based seed splitting.
//!
//! Every random stream is identified by a root seed, a text label and a list of
//! integer counters. The stream seed is the first eight bytes (little endian) of
//!
//! ```text
//! SHA-256( "sinr-seed-v1" || root as u64 LE || len(label) as u64 LE || label
//!          || for each counter: counter as u64 LE )
//! ```
//!
//! Experiments use `derive_seed(seed_root, experiment_kind, &[lambda_index, trial_index])`
//! and hand the result to [`stream_rng`], a ChaCha8 generator. Any implementation
//! following this recipe reproduces the same streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

const DOMAIN_TAG: &[u8] = b"sinr-seed-v1";

pub fn derive_seed(root: u64, label: &str, counters: &[u64]) -> u64 {
    let mut h = Sha256::new();
    h.update(DOMAIN_TAG);
    h.update(root.to_le_bytes());
    h.update((label.len() as u64).to_le_bytes());
    h.update(label.as_bytes());
    for c in counters {
        h.update(c.to_le_bytes());
    }
    let out = h.finalize();
    let mut first = [0u8; 8];
    first.copy_from_slice(&out[..8]);
    u64::from_le_bytes(first)
}

pub fn stream_rng(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Hex SHA-256 digest of arbitrary bytes (config hashes, instance hashes).
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
