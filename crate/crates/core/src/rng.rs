//! Seeded RNG construction.
//!
//! Every randomized operation draws from a ChaCha8 stream keyed by the
//! caller's seed and a fixed per-purpose stream id, so two operations given
//! the same seed stay statistically independent while runs remain exactly
//! reproducible across platforms.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub(crate) mod streams {
    pub const INIT_FACTORS: u64 = 1;
    pub const SUBSAMPLE: u64 = 2;
    pub const NOISE: u64 = 3;
    pub const UNIFORM_MATRIX: u64 = 4;
    pub const SYNTHETIC: u64 = 5;
    pub const KMEANS: u64 = 6;
}

pub(crate) fn seeded(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
