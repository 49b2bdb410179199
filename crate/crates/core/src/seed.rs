//! Hierarchical seed derivation.
//!
//! A child seed is the first eight bytes (little endian) of
//! `SHA-256(root_le || label_1 || … || label_k)`, where each label is encoded
//! as a tag byte (0 for text, 1 for integers), its byte length as a
//! little-endian `u64`, then the bytes themselves. The encoding is
//! prefix-free, so distinct label paths never hash the same input.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// One component of a label path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedLabel<'a> {
    Text(&'a str),
    Index(u64),
}

impl<'a> From<&'a str> for SeedLabel<'a> {
    fn from(s: &'a str) -> Self {
        SeedLabel::Text(s)
    }
}

impl From<u64> for SeedLabel<'_> {
    fn from(i: u64) -> Self {
        SeedLabel::Index(i)
    }
}

impl From<usize> for SeedLabel<'_> {
    fn from(i: usize) -> Self {
        SeedLabel::Index(i as u64)
    }
}

impl From<u32> for SeedLabel<'_> {
    fn from(i: u32) -> Self {
        SeedLabel::Index(i as u64)
    }
}

/// Derives a child seed from `root` and a label path.
pub fn seed_stream(root: u64, labels: &[SeedLabel<'_>]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(root.to_le_bytes());
    for label in labels {
        match label {
            SeedLabel::Text(s) => {
                hasher.update([0u8]);
                hasher.update((s.len() as u64).to_le_bytes());
                hasher.update(s.as_bytes());
            }
            SeedLabel::Index(i) => {
                hasher.update([1u8]);
                hasher.update(8u64.to_le_bytes());
                hasher.update(i.to_le_bytes());
            }
        }
    }
    let digest = hasher.finalize();
    let mut head = [0u8; 8];
    head.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(head)
}

/// ChaCha8 generator seeded from [`seed_stream`].
pub fn rng_for(root: u64, labels: &[SeedLabel<'_>]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed_stream(root, labels))
}

/// Shorthand for building label slices: `labels!["mc", s]`.
#[macro_export]
macro_rules! labels {
    ($($x:expr),* $(,)?) => {
        [$($crate::seed::SeedLabel::from($x)),*]
    };
}
