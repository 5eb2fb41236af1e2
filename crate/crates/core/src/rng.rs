//! Deterministic per-coordinate random streams.
//!
//! Every coordinate visit draws from its own generator keyed on
//! `(seed, x, y, sweep)`, so results do not depend on visit scheduling.

use rand::rngs::SmallRng;
use rand::SeedableRng;

#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
pub fn key(seed: u64, a: u64, b: u64, c: u64) -> u64 {
    let mut h = splitmix64(seed);
    h = splitmix64(h ^ a);
    h = splitmix64(h ^ b.rotate_left(21));
    splitmix64(h ^ c.rotate_left(42))
}

/// Generator for one coordinate visit in one sweep.
#[inline]
pub fn stream(seed: u64, x: i32, y: i32, sweep: u64) -> SmallRng {
    SmallRng::seed_from_u64(key(seed, x as u32 as u64, y as u32 as u64, sweep))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: u64 = stream(7, 3, 4, 0).gen();
        let b: u64 = stream(7, 3, 4, 0).gen();
        let c: u64 = stream(7, 4, 3, 0).gen();
        let d: u64 = stream(7, 3, 4, 1).gen();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }
}
