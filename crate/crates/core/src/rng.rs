//! Deterministic random sub-streams.
//!
//! Every random draw in the engine comes from a ChaCha stream keyed by a
//! master seed plus a path of integer labels (placement index, purpose tag,
//! trial batch, ...). Streams with different paths are independent, so
//! placements and Monte Carlo batches can run in any order or in parallel
//! and still reproduce bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub type Stream = ChaCha12Rng;

/// Purpose tags used as the second path component inside a placement.
pub mod tag {
    pub const GEOMETRY: u64 = 1;
    pub const SHADOWING: u64 = 2;
    pub const PILOTS: u64 = 3;
    pub const UNF: u64 = 4;
    pub const NONCOHERENT: u64 = 5;
    pub const SMALL_SCALE: u64 = 6;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds a label path into a child seed.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(seed), |acc, &label| splitmix64(acc ^ splitmix64(label)))
}

pub fn substream(seed: u64, path: &[u64]) -> Stream {
    Stream::seed_from_u64(derive_seed(seed, path))
}
