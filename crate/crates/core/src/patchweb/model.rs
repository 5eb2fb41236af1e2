use rand::rngs::SmallRng;
use rand::seq::index::sample;
use rand::SeedableRng;

use crate::error::{Error, Result};

/// Probability that two given images share a uniformly drawn working set of
/// `m` images out of `n`: `m(m-1) / (n(n-1))`.
pub fn coincidence_probability(n: usize, m: usize) -> Result<f64> {
    if m < 2 || m > n {
        return Err(Error::param(format!("need 2 <= m <= n, got m = {m}, n = {n}")));
    }
    Ok((m * (m - 1)) as f64 / (n * (n - 1)) as f64)
}

/// Expected number of working sets drawn before the two images first
/// co-occur: `1/p - 1`.
pub fn expected_sets_before_cooccurrence(n: usize, m: usize) -> Result<f64> {
    Ok(1.0 / coincidence_probability(n, m)? - 1.0)
}

/// Draws uniform working sets until images 0 and 1 land in the same one and
/// returns the mean number of sets drawn before that, over `trials` runs.
pub fn simulate_sets_before_cooccurrence(n: usize, m: usize, trials: usize, seed: u64) -> Result<f64> {
    coincidence_probability(n, m)?;
    let mut rng = SmallRng::seed_from_u64(seed);
    let mut total = 0u64;
    for _ in 0..trials {
        let mut misses = 0u64;
        loop {
            let s = sample(&mut rng, n, m);
            let (mut a, mut b) = (false, false);
            for i in s.iter() {
                a |= i == 0;
                b |= i == 1;
            }
            if a && b {
                break;
            }
            misses += 1;
        }
        total += misses;
    }
    Ok(total as f64 / trials.max(1) as f64)
}
