//! Keyed random streams.
//!
//! Every random decision in the crate is drawn from a stream addressed by a
//! master seed plus a short key path (displacement class, replica index, ...).
//! Streams are ChaCha8 instances seeded from a SplitMix64 hash of the path, so
//! the value of a draw never depends on which thread asked for it or in what
//! order the streams were opened.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Domain tags keep the key spaces of unrelated consumers apart.
pub mod tag {
    pub const CLASS_COUNT: u64 = 0x636c_6173_735f_6e00;
    pub const CLASS_PLACE: u64 = 0x636c_6173_735f_7000;
    pub const EDGE_UNIFORM: u64 = 0x6564_6765_5f75_0000;
    pub const REPLICA: u64 = 0x7265_706c_6963_6100;
    pub const BOOTSTRAP: u64 = 0x626f_6f74_7374_7200;
}

#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hashes a seed and a key path to a single 64-bit value.
pub fn derive_seed(seed: u64, keys: &[u64]) -> u64 {
    let mut h = splitmix64(seed ^ 0x4c52_505f_7365_6564);
    for &k in keys {
        h = splitmix64(h ^ splitmix64(k.wrapping_add(0x2545_f491_4f6c_dd1d)));
    }
    h
}

/// Opens the ChaCha8 stream addressed by `(seed, keys)`.
pub fn stream(seed: u64, keys: &[u64]) -> ChaCha8Rng {
    let base = derive_seed(seed, keys);
    let mut bytes = [0u8; 32];
    let mut s = base;
    for chunk in bytes.chunks_exact_mut(8) {
        s = splitmix64(s);
        chunk.copy_from_slice(&s.to_le_bytes());
    }
    ChaCha8Rng::from_seed(bytes)
}

/// A uniform variate in `[0, 1)` that is a pure function of `(seed, keys)`.
pub fn keyed_uniform(seed: u64, keys: &[u64]) -> f64 {
    (splitmix64(derive_seed(seed, keys)) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Stable key for a displacement vector.
pub fn displacement_key(w: &[i64]) -> u64 {
    let mut h = splitmix64(w.len() as u64);
    for &c in w {
        h = splitmix64(h ^ (c as u64));
    }
    h
}
