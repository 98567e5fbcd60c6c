//! Seeded randomness used across the simulator.
//!
//! Everything random in the crate flows through ChaCha8 streams so that runs
//! are bit-reproducible across machines. Gaussian draws use Box-Muller on
//! 53-bit uniforms; both algorithms are fixed here and never swapped for a
//! platform generator.

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn chacha(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform double in [0, 1) with 53 bits of precision.
pub fn uniform_f64(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform double in [lo, hi).
pub fn uniform_in(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * uniform_f64(rng)
}

/// One pair of independent standard normal deviates (Box-Muller).
pub fn standard_normal_pair(rng: &mut ChaCha8Rng) -> (f64, f64) {
    // Guard the log against u1 == 0.
    let mut u1 = uniform_f64(rng);
    if u1 <= f64::MIN_POSITIVE {
        u1 = f64::MIN_POSITIVE;
    }
    let u2 = uniform_f64(rng);
    let r = (-2.0 * u1.ln()).sqrt();
    let theta = 2.0 * std::f64::consts::PI * u2;
    (r * theta.cos(), r * theta.sin())
}
