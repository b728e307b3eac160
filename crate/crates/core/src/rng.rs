//! Seeded randomness shared by every stochastic stage.
//!
//! All randomness flows from a 64-bit seed through ChaCha8, whose output
//! stream is fixed across platforms and releases of `rand_chacha`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Per-example seed used when examples are built independently
/// (possibly in parallel): `seed ⊕ index`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    seed ^ index
}
