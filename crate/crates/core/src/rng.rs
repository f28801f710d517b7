//! Seed derivation.
//!
//! Every stochastic routine takes an explicit `u64` seed. Independent
//! streams (ensemble runs, sampling chunks, instances) are derived from a
//! root seed with [`derive_seed`], so results never depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SeededRng = ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of the `index`-th child stream: `mix64(root ^ index)`.
pub fn derive_seed(root: u64, index: u64) -> u64 {
    mix64(root ^ index)
}

/// Seed of a named sub-stream, used to keep e.g. instance sampling and
/// ensemble runs from sharing a sequence.
pub fn substream(root: u64, tag: &str) -> u64 {
    // FNV-1a over the tag
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    mix64(root.wrapping_add(mix64(h)))
}

pub fn rng_from_seed(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}
