//! Seeded, splittable random streams.
//!
//! A stream is identified by `(seed, stream_id)` and is backed by
//! ChaCha12 keyed from both values, so equal identifiers reproduce the
//! exact draw sequence and distinct `stream_id`s give independent
//! streams (distinct cipher keys). Purpose-tagged derivation lets the
//! harness hand disjoint streams to channel draws, noise draws, and
//! training without coordination.

use alloc::format;
use alloc::vec::Vec;

use num_complex::Complex64;
#[cfg_attr(test, allow(unused_imports))]
use num_traits::Float;
use rand_chacha::ChaCha12Rng;
use rand_core::{RngCore, SeedableRng};

use crate::matrix::ComplexMatrix;
use crate::{Error, Result};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const FNV_OFFSET: u64 = 0xCBF2_9CE4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01B3;

/// splitmix64 output function; a bijective 64-bit mixer.
fn mix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Deterministic random stream addressed by `(seed, stream_id)`.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha12Rng,
}

impl RngStream {
    /// Open the stream at `(seed, stream_id)`. The ChaCha key is built
    /// from mixed copies of both identifiers, so any change to either
    /// yields an unrelated stream.
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let words = [
            mix64(seed),
            mix64(seed ^ 0xA076_1D64_78BD_642F),
            mix64(stream_id),
            mix64(stream_id ^ 0xE703_7ED1_A0B4_28DB),
        ];
        let mut key = [0u8; 32];
        for (i, w) in words.iter().enumerate() {
            key[8 * i..8 * (i + 1)].copy_from_slice(&w.to_le_bytes());
        }
        Self {
            seed,
            stream_id,
            rng: ChaCha12Rng::from_seed(key),
        }
    }

    /// Derive a stream for one purpose and index under a run seed:
    /// `stream_id = mix(fnv1a(purpose) ^ mix(index))`.
    pub fn derive(seed: u64, purpose: &str, index: u64) -> Self {
        let stream_id = mix64(fnv1a(purpose.as_bytes()) ^ mix64(index));
        Self::new(seed, stream_id)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform in [0, 1) with 53 random bits.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Two independent standard normal draws via Box-Muller.
    ///
    /// Consumes exactly two `u64`s; `u1` is shifted into (0, 1] so the
    /// logarithm is always finite.
    pub fn standard_normal_pair(&mut self) -> (f64, f64) {
        let u1 = ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        let u2 = (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * core::f64::consts::PI * u2;
        (r * theta.cos(), r * theta.sin())
    }

    /// One circularly-symmetric complex Gaussian with total variance
    /// `variance` (half per real dimension).
    pub fn complex_gaussian(&mut self, variance: f64) -> Complex64 {
        let (g1, g2) = self.standard_normal_pair();
        let s = (variance * 0.5).sqrt();
        Complex64::new(g1 * s, g2 * s)
    }
}

/// Fill a `rows x cols` matrix with i.i.d. circularly-symmetric complex
/// Gaussian entries of total variance `variance`, row-major draw order.
pub fn sample_complex_gaussian(
    rows: usize,
    cols: usize,
    variance: f64,
    rng: &mut RngStream,
) -> Result<ComplexMatrix> {
    if variance < 0.0 || !variance.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "variance must be finite and >= 0, got {variance}"
        )));
    }
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        data.push(rng.complex_gaussian(variance));
    }
    Ok(ComplexMatrix::from_fn(rows, cols, |r, c| {
        data[r * cols + c]
    }))
}
