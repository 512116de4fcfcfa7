//! Named, independent random sub-streams derived from one master seed.
//!
//! A stream is addressed by `(seed, domain, path)`. The ChaCha key comes from
//! the master seed and the 64-bit stream id from hashing the domain and path,
//! so changing how one stage consumes randomness never shifts another stage.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stage that owns a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Population = 1,
    Offers = 2,
    Decisions = 3,
    Replicates = 4,
}

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

fn mix(mut z: u64) -> u64 {
    // splitmix64 finalizer
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn stream_id(domain: Domain, path: &[u64]) -> u64 {
    let mut h = mix(domain as u64);
    for &p in path {
        h = mix(h ^ p.wrapping_mul(GOLDEN));
    }
    h
}

/// The generator for `(seed, domain, path)`.
pub fn substream(seed: u64, domain: Domain, path: &[u64]) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id(domain, path));
    rng
}
