//! Seeded random streams.
//!
//! Every stochastic operation takes an explicit generator; nothing draws from
//! thread-local or OS entropy. Independent streams for the same seed are
//! obtained through ChaCha stream ids.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SeededRng = ChaCha8Rng;

/// Generator for `seed`, using stream 0.
pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generator for `seed` on an independent stream (e.g. a row block or client index).
pub fn seeded_stream(seed: u64, stream: u64) -> SeededRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derive a child seed from a parent seed and a label, for reproducible fan-out.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut h = crate::hash::Fnv64::new();
    h.write(&seed.to_le_bytes());
    h.write(label.as_bytes());
    h.finish()
}
