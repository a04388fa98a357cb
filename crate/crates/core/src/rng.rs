//! Deterministic random streams.
//!
//! Every independent work unit draws from its own ChaCha stream keyed by
//! `(seed, purpose, index)`, so results do not depend on execution order or
//! thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tags keep the streams used for different tasks disjoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Data = 0x01,
    Folds = 0x02,
    Bootstrap = 0x03,
    FixedRegressors = 0x04,
    Sampler = 0x05,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn stream(seed: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    let key = splitmix64(seed ^ splitmix64(purpose as u64));
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(index);
    rng
}
