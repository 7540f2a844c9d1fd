//! Seeded random streams.
//!
//! Every random decision in the engine flows from a master seed. Independent
//! streams (per repeat, per generation, per offspring) are derived by mixing
//! the master seed with the stream coordinates, so parallel scheduling never
//! changes results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministically combines a seed with a list of stream coordinates.
pub fn derive_seed(seed: u64, coords: &[u64]) -> u64 {
    coords
        .iter()
        .fold(mix64(seed), |acc, &c| mix64(acc ^ mix64(c)))
}

pub fn seeded(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

pub fn stream(seed: u64, coords: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(seed, coords))
}
