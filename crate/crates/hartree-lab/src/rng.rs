//! Deterministic seeding and Gaussian sampling.
//!
//! Everything random in this crate flows through SplitMix64: stream seeds are
//! derived with the SplitMix64 mixing function, and complex Gaussians are
//! produced by Box-Muller on SplitMix64 uniforms. Same seed, same bits, on any
//! platform.

pub const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// One SplitMix64 step: advance `state` by the golden-ratio increment and
/// return the mixed output.
#[inline]
pub fn splitmix64_next(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN_GAMMA);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive the seed of stream `index` from a master seed.
///
/// This is the SplitMix64 output of `master XOR (index * GOLDEN_GAMMA)`, so
/// `derive_seed(0, 0)` equals the first SplitMix64 output of seed 0.
#[inline]
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut state = master ^ index.wrapping_mul(GOLDEN_GAMMA);
    splitmix64_next(&mut state)
}

/// A small deterministic generator over a SplitMix64 stream.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        splitmix64_next(&mut self.state)
    }

    /// Uniform in the half-open interval (0, 1]; never returns 0, so it is
    /// safe under a logarithm.
    #[inline]
    pub fn next_unit_open(&mut self) -> f64 {
        (((self.next_u64() >> 11) + 1) as f64) * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Uniform in [0, 1).
    #[inline]
    pub fn next_unit(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64) * (1.0 / 9_007_199_254_740_992.0)
    }

    /// A standard real Gaussian N(0, 1) via Box-Muller.
    #[inline]
    pub fn next_gaussian(&mut self) -> f64 {
        let r = (-2.0 * self.next_unit_open().ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * self.next_unit();
        r * theta.cos()
    }

    /// A mean-zero complex Gaussian with E|g|^2 = 1 (real and imaginary parts
    /// independent with variance 1/2 each).
    #[inline]
    pub fn next_complex_gaussian(&mut self) -> num_complex::Complex64 {
        let r = (-self.next_unit_open().ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * self.next_unit();
        num_complex::Complex64::new(r * theta.cos(), r * theta.sin())
    }
}
