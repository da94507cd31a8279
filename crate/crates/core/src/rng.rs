//! Deterministic random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 stream addressed by
//! `(derived seed, stream index)`. Seeds are derived by hashing the user seed
//! together with a phase label and a path (for example a tree-node path), so
//! results never depend on iteration order or worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(mut h: u64, bytes: &[u8]) -> u64 {
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Hash `(seed, phase, path)` into a fresh 64-bit seed.
pub fn derive_seed(seed: u64, phase: &str, path: &[u8]) -> u64 {
    let mut h = fnv1a(FNV_OFFSET, &seed.to_le_bytes());
    h = fnv1a(h, phase.as_bytes());
    // separator so ("ab", "c") and ("a", "bc") differ
    h = fnv1a(h, &[0xff]);
    h = fnv1a(h, path);
    splitmix64(h)
}

/// Counter-addressed substream: `index` selects an independent ChaCha stream.
pub fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
