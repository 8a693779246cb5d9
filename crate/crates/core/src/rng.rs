//! Seed derivation. Every random draw in the crate comes from a ChaCha8
//! stream addressed by `(seed, stream id)`, so results are a pure function of
//! the configuration and the seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type NoiseRng = ChaCha8Rng;

pub const ARRIVAL_STREAM: u64 = 0;
pub const BACKGROUND_STREAM: u64 = 1;
pub const CALIBRATION_STREAM: u64 = u64::MAX;
const IMPULSE_STREAM_BASE: u64 = 2;

pub fn stream(seed: u64, stream_id: u64) -> NoiseRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

/// Stream used for the impulse with the given arrival ordinal.
pub fn impulse_stream(seed: u64, ordinal: u64) -> NoiseRng {
    stream(seed, IMPULSE_STREAM_BASE + ordinal)
}

/// SplitMix64 finalizer; maps `(master, index)` to a well-mixed child seed.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
