//! Bit-to-symbol mapping with unit average power and exact soft
//! demapping under a white-Gaussian noise assumption.
//!
//! Noise variances everywhere are the total complex variance (both real
//! dimensions summed). QPSK uses Gray labeling with the I bit first;
//! per symbol, the first bit is the most significant bit of the
//! constellation point index.

use alloc::format;
use alloc::vec::Vec;

use num_complex::Complex64;
#[cfg_attr(test, allow(unused_imports))]
use num_traits::Float;

use crate::polar::BitVector;
use crate::{clamp_llr, Error, Result};

const FRAC_1_SQRT_2: f64 = core::f64::consts::FRAC_1_SQRT_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modulation {
    Bpsk,
    Qpsk,
}

impl Modulation {
    pub fn bits_per_symbol(self) -> usize {
        match self {
            Modulation::Bpsk => 1,
            Modulation::Qpsk => 2,
        }
    }

    /// Constellation size 2^B.
    pub fn points(self) -> usize {
        1 << self.bits_per_symbol()
    }

    /// Constellation point for a point index. BPSK: 0 -> +1, 1 -> -1.
    /// QPSK: index = (b_I << 1) | b_Q, point = ((1-2b_I) + j(1-2b_Q))/sqrt(2).
    pub fn point(self, index: usize) -> Complex64 {
        match self {
            Modulation::Bpsk => Complex64::new(1.0 - 2.0 * index as f64, 0.0),
            Modulation::Qpsk => {
                let b_i = (index >> 1) & 1;
                let b_q = index & 1;
                Complex64::new(
                    (1.0 - 2.0 * b_i as f64) * FRAC_1_SQRT_2,
                    (1.0 - 2.0 * b_q as f64) * FRAC_1_SQRT_2,
                )
            }
        }
    }

    /// Bit `b` (0-based, transmission order) of a point index; the
    /// first bit is the MSB of the index.
    #[inline]
    pub fn point_bit(self, index: usize, b: usize) -> u8 {
        let shift = self.bits_per_symbol() - 1 - b;
        ((index >> shift) & 1) as u8
    }

    /// Point index for a chunk of B bits in transmission order.
    pub fn index_of_bits(self, bits: &[u8]) -> usize {
        let b = self.bits_per_symbol();
        debug_assert_eq!(bits.len(), b);
        bits.iter()
            .fold(0usize, |acc, &bit| (acc << 1) | bit as usize)
    }

    pub fn name(self) -> &'static str {
        match self {
            Modulation::Bpsk => "bpsk",
            Modulation::Qpsk => "qpsk",
        }
    }
}

/// Map a bit vector to constellation symbols, B bits per symbol.
pub fn modulate(bits: &BitVector, scheme: Modulation) -> Result<Vec<Complex64>> {
    let b = scheme.bits_per_symbol();
    if bits.len() % b != 0 {
        return Err(Error::InvalidArgument(format!(
            "bit count {} not divisible by {b} bits/symbol",
            bits.len()
        )));
    }
    Ok(bits
        .bits()
        .chunks(b)
        .map(|chunk| scheme.point(scheme.index_of_bits(chunk)))
        .collect())
}

/// Exact per-bit LLRs for one received symbol under AWGN with total
/// complex variance `noise_variance`:
/// `LLR_b = ln sum_{s: bit_b=0} e^{-|y-s|^2/v} - ln sum_{s: bit_b=1} (...)`,
/// clamped to +/-LLR_MAX.
pub fn demap_llr_awgn(
    y: Complex64,
    noise_variance: f64,
    scheme: Modulation,
) -> Result<Vec<f64>> {
    if !(noise_variance > 0.0) || !noise_variance.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "noise variance must be positive and finite, got {noise_variance}"
        )));
    }
    let b = scheme.bits_per_symbol();
    let npoints = scheme.points();
    let mut metrics = [0.0f64; 4];
    let mut mmax = f64::NEG_INFINITY;
    for (p, metric) in metrics.iter_mut().enumerate().take(npoints) {
        *metric = -(y - scheme.point(p)).norm_sqr() / noise_variance;
        mmax = mmax.max(*metric);
    }
    let mut out = Vec::with_capacity(b);
    for bit in 0..b {
        let mut w0 = 0.0;
        let mut w1 = 0.0;
        for p in 0..npoints {
            let w = (metrics[p] - mmax).exp();
            if scheme.point_bit(p, bit) == 0 {
                w0 += w;
            } else {
                w1 += w;
            }
        }
        let llr = if w1 == 0.0 {
            f64::INFINITY
        } else if w0 == 0.0 {
            f64::NEG_INFINITY
        } else {
            w0.ln() - w1.ln()
        };
        out.push(clamp_llr(llr));
    }
    Ok(out)
}

/// Nearest-point hard decision, returned as the symbol's bits.
pub fn hard_demap(y: Complex64, scheme: Modulation) -> Vec<u8> {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for p in 0..scheme.points() {
        let d = (y - scheme.point(p)).norm_sqr();
        if d < best_d {
            best_d = d;
            best = p;
        }
    }
    (0..scheme.bits_per_symbol())
        .map(|b| scheme.point_bit(best, b))
        .collect()
}
