//! Stable seed derivation.
//!
//! Per-item seeds are the first eight bytes (little-endian) of a SHA-256
//! digest over a domain tag and the item's identity, so they do not depend on
//! platform, hash-map ordering, or processing order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn fold(domain: &str, parts: &[&[u8]]) -> u64 {
    let mut h = Sha256::new();
    h.update(domain.as_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    let digest = h.finalize();
    let mut first = [0u8; 8];
    first.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(first)
}

/// Seed for one (image, augmentation scale) pair of a dataset build.
/// `rel_path` should use `/` separators so the value is portable.
pub fn pair_seed(global_seed: u64, rel_path: &str, scale: f64) -> u64 {
    fold(
        "degradekit.pair.v1",
        &[&global_seed.to_le_bytes(), rel_path.as_bytes(), &scale.to_bits().to_le_bytes()],
    )
}

/// Seed for one labelled sub-stream of a seeded process.
pub fn sub_seed(seed: u64, label: &str) -> u64 {
    fold("degradekit.sub.v1", &[&seed.to_le_bytes(), label.as_bytes()])
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
