//! Counter-based stream derivation on top of ChaCha8.
//!
//! Every random decision in the pipeline draws from a generator keyed by
//! `(root seed, label path)`. Substreams are independent of execution order,
//! which keeps replicates, chains and particles reproducible regardless of
//! scheduling, and lets components re-derive a stream without threading
//! generator state through the call graph.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Labels for the fixed top-level streams. Values are stable; changing them
/// changes every random artifact.
pub mod stream {
    pub const MH_PROPOSAL: u64 = 0x01;
    pub const MH_ACCEPT: u64 = 0x02;
    pub const FILTER: u64 = 0x03;
    pub const PARTICLE: u64 = 0x04;
    pub const RESAMPLE: u64 = 0x05;
    pub const PATH_DRAW: u64 = 0x06;
    pub const TAIL: u64 = 0x07;
    pub const INIT: u64 = 0x08;
    pub const TRUTH: u64 = 0x09;
    pub const OBS: u64 = 0x0a;
    pub const CHAIN: u64 = 0x0b;
    pub const PRIOR: u64 = 0x0c;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Mix a label path into a root seed. Order-sensitive: `[a, b] != [b, a]`.
pub fn derive_seed(root: u64, path: &[u64]) -> u64 {
    let mut s = splitmix64(root ^ 0x6c62_7265_6b61_6e64);
    for &label in path {
        s = splitmix64(s ^ splitmix64(label));
    }
    s
}

/// A ChaCha8 generator keyed by `(root, path)`. The 256-bit key is expanded
/// from the derived seed with splitmix64.
pub fn substream(root: u64, path: &[u64]) -> ChaCha8Rng {
    let mut s = derive_seed(root, path);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        s = splitmix64(s);
        chunk.copy_from_slice(&s.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
