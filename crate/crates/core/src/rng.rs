//! Seed plumbing. Every stochastic component draws from its own ChaCha
//! stream derived from a run seed, so adding a consumer never shifts the
//! numbers another one sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Named sub-streams.
#[derive(Clone, Copy, Debug)]
pub enum Stream {
    Init = 1,
    Corruption = 2,
    Mask = 3,
    Split = 4,
    Classifier = 5,
    Sampling = 6,
}

/// SplitMix64 finalizer.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, stream: Stream) -> u64 {
    mix(seed ^ mix(stream as u64))
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, stream))
}
