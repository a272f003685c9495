//! Deterministic random-number streams.
//!
//! Every simulation draws from one user-facing `seed`. Components ask
//! for named sub-streams (`substream(seed, "nplayer-path", k)`), so
//! path `k` sees the same randomness no matter how work is scheduled
//! across threads, and adding a new consumer of randomness does not
//! perturb existing ones.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// splitmix64 finalizer; standard constants.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// FNV-1a over the label bytes, so distinct component names decorrelate.
fn label_hash(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// A reproducible generator for `(seed, label, index)`.
pub fn substream(seed: u64, label: &str, index: u64) -> ChaCha12Rng {
    let mixed = mix(seed ^ mix(label_hash(label)) ^ mix(index.wrapping_mul(0xd6e8_feb8_6659_fd93)));
    ChaCha12Rng::seed_from_u64(mixed)
}
