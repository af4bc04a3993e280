//! Seed stream splitting.
//!
//! Every randomized quantity derives from one master seed. A stream is
//! identified by `(master, tag, index)` and seeded with
//!
//! ```text
//! seed = mix(master ^ mix(tag ^ mix(index)))
//! ```
//!
//! where `mix` is the SplitMix64 finalizer. Per-sample streams make Monte
//! Carlo loops independent of the number of worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags. Values are part of the reproducibility contract.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Covariance = 1,
    Training = 2,
    Slice = 3,
    SignedDistance = 4,
    Bootstrap = 5,
    Validation = 6,
    Calibration = 7,
    Objective = 8,
    Hyperparameters = 9,
}

pub type Rng = ChaCha8Rng;

#[inline]
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, stream: Stream, index: u64) -> u64 {
    mix(master ^ mix(stream as u64 ^ mix(index)))
}

pub fn stream(master: u64, stream: Stream, index: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, stream, index))
}
