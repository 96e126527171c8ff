//! Seed derivation.
//!
//! Every random stream is addressed by the master seed plus a path of
//! counters, e.g. `[run, STREAM_SPLIT]`. Each counter is folded in with a
//! SplitMix64 step, so adding a new grid cell or stream never shifts the
//! seeds of existing ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream identifiers used by the experiment pipeline.
pub mod streams {
    pub const SPLIT: u64 = 1;
    pub const AUGMENT_TRAIN: u64 = 2;
    pub const AUGMENT_CALIBRATION: u64 = 3;
    pub const AUGMENT_TEST: u64 = 4;
    pub const SENSITIVITY_TRAIN: u64 = 5;
    pub const SENSITIVITY_CALIBRATION: u64 = 6;
    pub const SYNTHESIS: u64 = 7;
    pub const SAMPLE: u64 = 8;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(master), |acc, &c| splitmix64(acc ^ splitmix64(c.wrapping_add(0xA5A5))))
}

pub fn rng_for(master: u64, path: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(master, path))
}

pub fn rng(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}
