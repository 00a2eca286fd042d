//! Deterministic seed derivation.
//!
//! Every stochastic component draws from a stream keyed by a master seed plus
//! a path of integer tags (replication, item, restart, ...). Parallel and
//! serial runs therefore see identical randomness.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mix a master seed with a tag path into a single derived seed.
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    let mut s = splitmix64(master ^ 0x6c62_272e_07bb_0142);
    for &t in tags {
        s = splitmix64(s ^ splitmix64(t.wrapping_add(0x1000_0000_0000_0001)));
    }
    s
}

/// A ChaCha stream for the given seed path.
pub fn stream(master: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, tags))
}
