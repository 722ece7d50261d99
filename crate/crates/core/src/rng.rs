//! Seeded random number generation shared by every stochastic component.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Deterministic generator for `seed`, decorrelated per `stream` so that the
/// split, the attack and the model initialisation of one run never share a
/// sequence.
pub fn seeded(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub mod streams {
    pub const SBM: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const ATTACK: u64 = 3;
    pub const INIT: u64 = 4;
    pub const DROPOUT: u64 = 5;
}
