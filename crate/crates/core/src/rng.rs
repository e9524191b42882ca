//! Seeded random streams.
//!
//! Every stochastic routine draws from a ChaCha8 generator, a counter-based
//! 64-bit-seeded stream cipher, so results are bit-reproducible given a seed.
//! Independent sub-streams (trials, sampler phases) use the ChaCha stream id
//! rather than sequential reseeding, which keeps them independent of how
//! work is scheduled.
//!
//! Gaussian variates come from the Box-Muller transform and Student-t
//! variates from a ratio of Gaussians, so the number of uniforms consumed per
//! draw is fixed.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Generator for sub-stream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for item `index` of a run seeded with `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    mix64(seed ^ mix64(index))
}

/// Uniform on the open interval (0, 1) with 53 bits of resolution.
pub fn uniform_open<R: RngCore>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal via Box-Muller; consumes exactly two uniforms.
pub fn standard_normal<R: RngCore>(rng: &mut R) -> f64 {
    let u1 = uniform_open(rng);
    let u2 = uniform_open(rng);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Student-t with integer degrees of freedom as `Z / sqrt(chi2_df / df)`;
/// consumes `2 * (df + 1)` uniforms.
pub fn student_t<R: RngCore>(rng: &mut R, df: u32) -> f64 {
    let z = standard_normal(rng);
    let chi2: f64 = (0..df).map(|_| standard_normal(rng).powi(2)).sum();
    z / (chi2 / df as f64).sqrt()
}
