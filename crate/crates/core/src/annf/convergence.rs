//! Expected-iteration model for a distinct region of `m` pixels inside
//! `M`-pixel images, where a random sample "hits" if it lands within a
//! neighborhood of `C` pixels around the true offset.

use crate::error::{Error, Result};

/// Probability that at least one of the region's `m` samples lands in the
/// `C`-neighborhood: `1 - (1 - C/M)^m`.
pub fn hit_probability(c: f64, big_m: f64, m: f64) -> Result<f64> {
    if !(c > 0.0 && big_m > 0.0 && m > 0.0) || c > big_m {
        return Err(Error::param("require 0 < C <= M and m > 0"));
    }
    Ok(1.0 - (1.0 - c / big_m).powf(m))
}

/// Expected iterations before convergence for finite `M`: `1/p - 1`.
pub fn expected_iters_finite(c: f64, big_m: f64, m: f64) -> Result<f64> {
    Ok(1.0 / hit_probability(c, big_m, m)? - 1.0)
}

/// Large-image limit `[1 - exp(-C·γ)]⁻¹ - 1` with `γ = m/M`.
pub fn expected_convergence_iters(c: f64, gamma: f64) -> Result<f64> {
    if !(c > 0.0 && gamma > 0.0) {
        return Err(Error::param("C and gamma must be positive"));
    }
    if c.is_infinite() {
        return Ok(0.0);
    }
    Ok(1.0 / (-(-c * gamma).exp_m1()) - 1.0)
}
