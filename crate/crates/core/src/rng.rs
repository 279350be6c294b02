//! Seed-portable random number generation.
//!
//! Every stochastic routine in this crate draws from an [`RngStream`], a
//! SplitMix64 generator with an explicitly documented state transition so that
//! a seed identifies the same sample sequence on any platform:
//!
//! ```text
//! state += 0x9E3779B97F4A7C15
//! z = state
//! z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//! z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//! output = z ^ (z >> 31)
//! ```
//!
//! The integer stream is bit-exact everywhere. Gaussian samples go through
//! Box-Muller using `libm` transcendentals, which are themselves deterministic
//! software implementations, so seeded float sequences are also portable.
//!
//! Independent substreams (per trial, per training step, per sample) are
//! derived from a parent seed and a stream label via [`derive_seed`] instead of
//! splitting live generator state; this keeps the derivation order-free and
//! lets parallel or out-of-order consumers reproduce the same draws.

use crate::error::{Error, Result};
use nalgebra::{Complex, DMatrix, DVector};

const GOLDEN: u64 = 0x9E3779B97F4A7C15;

/// SplitMix64 output scrambler, also used as the seed-mixing hash.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `seed` and a stream label.
///
/// `derive_seed(s, a) != derive_seed(s, b)` for `a != b` in practice; chains
/// of derivations (`derive_seed(derive_seed(s, a), b)`) name nested streams.
#[inline]
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    mix64(seed ^ mix64(stream.wrapping_add(GOLDEN)))
}

/// Well-known stream labels, so seed derivation chains are consistent across
/// the trainer, the evaluator, and the benchmark harness.
pub mod labels {
    pub const CHANNEL: u64 = 1;
    pub const UPLINK: u64 = 2;
    pub const DOWNLINK: u64 = 3;
    pub const RANDOM_BASELINE: u64 = 4;
    pub const WEIGHT_INIT: u64 = 5;
    pub const TRAIN_STEP: u64 = 6;
    pub const EVAL: u64 = 7;
    pub const SWEEP_POINT: u64 = 8;
    pub const TRAIN_INLINE: u64 = 9;
}

/// Deterministic SplitMix64 stream.
#[derive(Debug, Clone)]
pub struct RngStream {
    state: u64,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        RngStream { state: seed }
    }

    /// Stream seeded by `derive_seed(seed, stream)`.
    pub fn derived(seed: u64, stream: u64) -> Self {
        RngStream::new(derive_seed(seed, stream))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix64(self.state)
    }

    /// Uniform double in `[0, 1)` from the top 53 bits.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform polarization angle on `[0, pi/2]`.
    #[inline]
    pub fn next_angle(&mut self) -> f64 {
        self.next_f64() * core::f64::consts::FRAC_PI_2
    }

    /// One Box-Muller pair of independent standard normals.
    ///
    /// Uses `u1` from `(0, 1]` so the logarithm is finite.
    pub fn next_normal_pair(&mut self) -> (f64, f64) {
        let u1 = ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        let u2 = self.next_f64();
        let r = (-2.0 * libm::log(u1)).sqrt();
        let phi = 2.0 * core::f64::consts::PI * u2;
        (r * libm::cos(phi), r * libm::sin(phi))
    }

    /// Circularly symmetric complex Gaussian with variance `var` (per complex
    /// entry, i.e. each real part has variance `var/2`).
    #[inline]
    pub fn next_cn(&mut self, var: f64) -> Complex<f64> {
        let s = (var * 0.5).sqrt();
        let (re, im) = self.next_normal_pair();
        Complex::new(s * re, s * im)
    }

    /// Isotropic unit vector on the complex sphere in `C^n`.
    pub fn next_unit_cvector(&mut self, n: usize) -> DVector<Complex<f64>> {
        let mut v = DVector::from_fn(n, |_, _| self.next_cn(1.0));
        let mut nrm = v.norm();
        // All-zero draws are a measure-zero event of the Box-Muller map;
        // resample rather than divide by zero.
        while nrm < 1e-300 {
            v = DVector::from_fn(n, |_, _| self.next_cn(1.0));
            nrm = v.norm();
        }
        v / Complex::new(nrm, 0.0)
    }
}

/// Matrix of i.i.d. CN(0, `variance`) entries, drawn in column-major order.
pub fn sample_complex_gaussian(
    rng: &mut RngStream,
    rows: usize,
    cols: usize,
    variance: f64,
) -> Result<DMatrix<Complex<f64>>> {
    if !(variance >= 0.0) {
        return Err(Error::domain(format!(
            "complex Gaussian variance must be nonnegative, got {variance}"
        )));
    }
    // from_fn fills column-major, matching the declared draw order.
    Ok(DMatrix::from_fn(rows, cols, |_, _| rng.next_cn(variance)))
}
