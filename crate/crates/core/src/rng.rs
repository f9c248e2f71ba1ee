//! Named random streams derived from one root seed.
//!
//! Every consumer of randomness (graph sampling, sink assignment, parameter
//! init, batch sampling) asks for its own stream, so changing how many draws
//! one consumer makes never shifts another consumer's values.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic generator for stream `name`, sub-stream `index`.
pub fn stream(root: u64, name: &str, index: u64) -> ChaCha8Rng {
    let seed = splitmix(root ^ splitmix(fnv1a(name.as_bytes())));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
