//! Stable seed derivation. Streams are keyed by position (epoch, client, round)
//! rather than drawn from one shared generator, so results do not depend on
//! execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Combines a seed with one more key component.
pub fn mix(seed: u64, key: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ key.rotate_left(17) ^ 0x6A09_E667_F3BC_C908)
}

/// FNV-1a over the bytes, for folding string ids into a seed.
pub fn hash_str(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Seed for one client's local training in one round.
pub fn client_round_seed(master: u64, client_id: &str, round: u64) -> u64 {
    mix(mix(master, hash_str(client_id)), round)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent generator for stream `key` under `seed`.
pub fn stream(seed: u64, key: u64) -> ChaCha8Rng {
    rng(mix(seed, key))
}
