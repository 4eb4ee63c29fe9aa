//! Seed derivation. Every random consumer gets its own stream, keyed by the
//! master seed plus a purpose label or an index, so adding a consumer never
//! shifts the draws of an existing one.

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

fn fnv1a(label: &str) -> u64 {
    label
        .bytes()
        .fold(FNV_OFFSET, |h, b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// Sub-seed for a named purpose, e.g. `derive(master, "state")`.
pub fn derive(master: u64, label: &str) -> u64 {
    splitmix64(master ^ splitmix64(fnv1a(label)))
}

/// Sub-seed for the `index`-th member of a family (plan entry, trial, restart).
pub fn derive_index(master: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master).wrapping_add(index.wrapping_mul(0xd1b5_4a32_d192_ed03)))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
