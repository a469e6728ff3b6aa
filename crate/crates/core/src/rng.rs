//! Named, counter-indexed random sub-streams derived from one seed.
//!
//! Every random draw is keyed by (seed, stream, index), so the result never
//! depends on evaluation order or thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Noise = 1,
    Perturbation = 2,
    Jitter = 3,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for entry `index` of `stream` under `seed`.
pub fn substream(seed: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    let key = splitmix64(splitmix64(seed) ^ splitmix64((stream as u64) << 56 ^ index));
    ChaCha8Rng::seed_from_u64(key)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: f64 = substream(7, Stream::Noise, 3).random();
        let b: f64 = substream(7, Stream::Noise, 3).random();
        let c: f64 = substream(7, Stream::Jitter, 3).random();
        let d: f64 = substream(7, Stream::Noise, 4).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }
}
