//! Reproducible RNG substreams.
//!
//! Every random draw in the crate comes from a stream keyed by
//! `(seed, purpose, index)`, so parallel or reordered work produces the same
//! numbers as sequential work.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn tag_hash(tag: &str) -> u64 {
    // FNV-1a, stable across platforms and releases.
    tag.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// Derive the 64-bit seed of the substream `(seed, tag, index)`.
pub fn substream_seed(seed: u64, tag: &str, index: u64) -> u64 {
    splitmix64(splitmix64(seed ^ splitmix64(tag_hash(tag))) ^ splitmix64(index.wrapping_add(1)))
}

/// Seeded generator for the substream `(seed, tag, index)`.
pub fn substream(seed: u64, tag: &str, index: u64) -> StreamRng {
    StreamRng::seed_from_u64(substream_seed(seed, tag, index))
}
