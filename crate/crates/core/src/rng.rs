//! Seed derivation. Every random draw in the crate flows through a
//! [`ChaCha8Rng`] built from a base seed plus a stream label, so results do
//! not depend on evaluation order or thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

/// Builds a generator from a base seed and a list of labels
/// (scenario id, epoch, view name, ...).
pub fn derive(seed: u64, labels: &[&[u8]]) -> Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    for label in labels {
        hasher.update((label.len() as u64).to_le_bytes());
        hasher.update(label);
    }
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn derived_streams_are_stable_and_distinct() {
        let a: u64 = derive(7, &[b"s1", b"view-a"]).random();
        let b: u64 = derive(7, &[b"s1", b"view-a"]).random();
        let c: u64 = derive(7, &[b"s1", b"view-b"]).random();
        let d: u64 = derive(7, &[b"s1view-a"]).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }
}
