//! Seeded random streams.
//!
//! Every stochastic component draws from a ChaCha stream keyed by a base seed
//! and a stream id, so results never depend on evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream ids for the independent consumers of a run seed.
pub mod streams {
    pub const SPLIT: u64 = 1;
    pub const INIT: u64 = 2;
    pub const DROPOUT: u64 = 3;
    pub const SHUFFLE: u64 = 4;
    pub const SBM_EDGES: u64 = 5;
    pub const SBM_FEATURES: u64 = 6;
    /// Sequence generation uses `SEQUENCE_BASE + view * 2^32 + node`.
    pub const SEQUENCE_BASE: u64 = 1 << 40;
}
