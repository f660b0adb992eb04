//! Seeded generator plumbing.
//!
//! Every stochastic entry point takes an explicit generator; replicate and
//! per-call streams are derived from a master seed so results do not depend
//! on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `stream` of the generator seeded with `seed`.
pub fn stream(seed: u64, stream: u64) -> SeededRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// 64-bit FNV-1a, used to turn labels (variable names, conditioning sets)
/// into stream identifiers.
pub fn label_hash(parts: &[&str]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for part in parts {
        for b in part.bytes().chain(std::iter::once(0x1f)) {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}
