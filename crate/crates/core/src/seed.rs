//! Deterministic seed derivation.
//!
//! Every randomized step takes an explicit `u64` seed. Independent streams are
//! derived from a parent seed and a tag so that results never depend on the
//! order in which parallel work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for stream `tag` under `parent`.
pub fn derive(parent: u64, tag: u64) -> u64 {
    splitmix(splitmix(parent) ^ splitmix(tag.wrapping_add(0xA076_1D64_78BD_642F)))
}

/// Child seed for a named stream.
pub fn derive_named(parent: u64, name: &str) -> u64 {
    let h = name
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3));
    derive(parent, h)
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
