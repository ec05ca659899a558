//! Deterministic seed derivation for Monte-Carlo runs.
//!
//! Every run gets `run_seed(base, index)`; inside a run, independent streams
//! (channel draw, training/noise, data bits) are split off with
//! `substream(run_seed, stream)`. Both use the SplitMix64 finalizer, so a
//! single run can be replayed from its printed seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used for every random draw in the crate.
pub type SimRng = ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of Monte-Carlo run `index` under base seed `base`.
pub fn run_seed(base: u64, index: u64) -> u64 {
    splitmix64(base ^ splitmix64(index.wrapping_mul(GOLDEN_GAMMA)))
}

/// Seed of an independent stream inside one run.
pub fn substream(run_seed: u64, stream: u64) -> u64 {
    splitmix64(run_seed.wrapping_add(splitmix64(stream ^ 0xA5A5_A5A5_A5A5_A5A5)))
}

pub fn rng_from_seed(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// Stream indices used inside a run.
pub mod streams {
    pub const CHANNEL: u64 = 0;
    pub const SIGNAL: u64 = 1;
    pub const DATA: u64 = 2;
}
