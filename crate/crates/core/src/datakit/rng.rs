//! Labeled sub-streams fanned out from one master seed.
//!
//! Every random decision in the pipeline draws from a `ChaCha8Rng`
//! seeded by `derive_seed(master, label)`, where the label names the
//! decision ("split", "pretrain", "episode/way5/s1/q15/42", ...). This
//! keeps independent pipeline stages decoupled: adding draws to one
//! stage never perturbs another.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// FNV-1a over the label bytes; stable across platforms.
fn hash_label(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// splitmix64 finalizer to decorrelate nearby seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic sub-seed for a labeled stream.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    mix(master ^ hash_label(label))
}

/// ChaCha stream for a labeled sub-seed.
pub fn stream(master: u64, label: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, label))
}

/// In-place Fisher-Yates shuffle with the documented draw order: one
/// `gen_range(0..=i)` per position from the back.
pub fn shuffle<T>(items: &mut [T], rng: &mut ChaCha8Rng) {
    use rand::Rng;
    for i in (1..items.len()).rev() {
        let j = rng.gen_range(0..=i);
        items.swap(i, j);
    }
}
