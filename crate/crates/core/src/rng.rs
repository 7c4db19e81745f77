//! Seeded generators. Every random choice in the crate goes through here so
//! that a single `u64` seed reproduces a run bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type DpRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> DpRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `stream` under `seed`. Streams share the key but never
/// overlap, so parallel workers can each take one.
pub fn stream(seed: u64, stream: u64) -> DpRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
