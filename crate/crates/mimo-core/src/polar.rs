//! Rate-configurable short polar codes with exact codebook-based soft
//! decoding.
//!
//! Blocks are short enough (N <= 64, K <= 20) that the full codebook is
//! enumerable, so both the bitwise MAP decoder and the sequence-ML
//! decoder score every codeword. All soft arithmetic stays in the log
//! domain; sums over the codebook factor out the running maximum before
//! exponentiation so 2^K-term sums cannot underflow.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[cfg_attr(test, allow(unused_imports))]
use num_traits::Float;

use crate::{clamp_llr, Error, Result};

/// Guard on enumerable message spaces.
const MAX_CODEBOOK_BITS: usize = 20;
/// Codeword scores below the per-call maximum by more than this are
/// dropped before exponentiation; e^-60 times 2^20 terms is ~1e-20
/// relative, far below every tolerance in use.
const EXP_CUTOFF: f64 = 60.0;

/// A bit sequence over {0, 1}, one byte per bit.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BitVector(Vec<u8>);

impl BitVector {
    pub fn new(bits: Vec<u8>) -> Self {
        debug_assert!(bits.iter().all(|b| *b <= 1));
        Self(bits)
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0; len])
    }

    /// Bits of `value`, LSB first, `len` of them.
    pub fn from_int(value: u64, len: usize) -> Self {
        Self((0..len).map(|k| ((value >> k) & 1) as u8).collect())
    }

    /// Inverse of [`BitVector::from_int`].
    pub fn to_int(&self) -> u64 {
        self.0
            .iter()
            .enumerate()
            .fold(0u64, |acc, (k, b)| acc | (u64::from(*b) << k))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> &[u8] {
        &self.0
    }

    pub fn xor(&self, rhs: &Self) -> Self {
        assert_eq!(self.len(), rhs.len());
        Self(
            self.0
                .iter()
                .zip(&rhs.0)
                .map(|(a, b)| a ^ b)
                .collect(),
        )
    }

    /// Count of positions where the two vectors differ.
    pub fn hamming_distance(&self, rhs: &Self) -> usize {
        assert_eq!(self.len(), rhs.len());
        self.0.iter().zip(&rhs.0).filter(|(a, b)| a != b).count()
    }
}

impl core::ops::Index<usize> for BitVector {
    type Output = u8;
    fn index(&self, i: usize) -> &u8 {
        &self.0[i]
    }
}

/// Polar code parameters: block length, message length, and the frozen
/// position set chosen by the BEC(0.5) Bhattacharyya recursion.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarCode {
    n: usize,
    k: usize,
    frozen: Vec<usize>,
    info: Vec<usize>,
}

impl PolarCode {
    /// Construct the (N, K) code. Synthetic-channel Bhattacharyya
    /// parameters start at z = 0.5 and split as z -> {2z - z^2, z^2};
    /// the N - K largest (ties: lower index first) are frozen.
    pub fn build(n: usize, k: usize) -> Result<Self> {
        if n == 0 || !n.is_power_of_two() {
            return Err(Error::InvalidArgument(format!(
                "block length {n} is not a power of two"
            )));
        }
        if k == 0 || k > n {
            return Err(Error::InvalidArgument(format!(
                "message length {k} out of range for block length {n}"
            )));
        }
        let z = bhattacharyya_bec(n);
        let mut order: Vec<usize> = (0..n).collect();
        // Worst synthetic channels first; ties freeze the lower index.
        order.sort_by(|&a, &b| z[b].partial_cmp(&z[a]).unwrap().then(a.cmp(&b)));
        let mut frozen: Vec<usize> = order[..n - k].to_vec();
        frozen.sort_unstable();
        let mut info: Vec<usize> = order[n - k..].to_vec();
        info.sort_unstable();
        Ok(Self { n, k, frozen, info })
    }

    pub fn block_len(&self) -> usize {
        self.n
    }

    pub fn msg_len(&self) -> usize {
        self.k
    }

    pub fn rate(&self) -> f64 {
        self.k as f64 / self.n as f64
    }

    pub fn frozen_set(&self) -> &[usize] {
        &self.frozen
    }

    pub fn info_positions(&self) -> &[usize] {
        &self.info
    }

    /// Encode a K-bit message: message bits go to the information
    /// positions in ascending order, frozen positions carry zero, and
    /// the result is u * F^(x)n over GF(2) with F = [[1,0],[1,1]] in
    /// natural (non-bit-reversed) order.
    pub fn encode(&self, message: &BitVector) -> Result<BitVector> {
        if message.len() != self.k {
            return Err(Error::InvalidArgument(format!(
                "message length {} != K = {}",
                message.len(),
                self.k
            )));
        }
        let mut u = vec![0u8; self.n];
        for (j, &pos) in self.info.iter().enumerate() {
            u[pos] = message[j];
        }
        polar_transform(&mut u);
        Ok(BitVector::new(u))
    }
}

/// In-place u -> u * F^(x)n over GF(2), natural order.
fn polar_transform(u: &mut [u8]) {
    let n = u.len();
    let mut half = 1;
    while half < n {
        let mut i = 0;
        while i < n {
            for j in i..i + half {
                u[j] ^= u[j + half];
            }
            i += 2 * half;
        }
        half *= 2;
    }
}

/// Bhattacharyya parameters of the N synthetic BEC(0.5) channels.
fn bhattacharyya_bec(n: usize) -> Vec<f64> {
    let mut z = vec![0.5f64];
    while z.len() < n {
        let mut next = Vec::with_capacity(2 * z.len());
        for &v in &z {
            next.push(2.0 * v - v * v);
            next.push(v * v);
        }
        z = next;
    }
    z
}

/// Decoder output carrying message-bit posteriors and, when requested,
/// codeword-bit posteriors for extrinsic exchange.
#[derive(Debug, Clone)]
pub struct SoftDecode {
    /// Posterior LLR per message bit, clamped to +/-LLR_MAX.
    pub msg_posterior: Vec<f64>,
    /// Hard decision per message bit (posterior sign, ties -> 0).
    pub msg_hard: BitVector,
    /// Posterior LLR per codeword bit, clamped.
    pub cw_posterior: Option<Vec<f64>>,
}

/// The fully enumerated codebook of a [`PolarCode`], the shared
/// read-only table behind every exact decode in the crate.
#[derive(Debug, Clone)]
pub struct Codebook {
    code: PolarCode,
    /// Codeword bit mask per message integer, bit n = codeword bit n.
    masks: Vec<u64>,
}

impl Codebook {
    pub fn new(code: &PolarCode) -> Result<Self> {
        if code.msg_len() > MAX_CODEBOOK_BITS {
            return Err(Error::CapacityExceeded(format!(
                "codebook of 2^{} messages exceeds the 2^{MAX_CODEBOOK_BITS} guard",
                code.msg_len()
            )));
        }
        if code.block_len() > 64 {
            return Err(Error::CapacityExceeded(format!(
                "block length {} exceeds the 64-bit codeword mask",
                code.block_len()
            )));
        }
        // Row masks for each message unit vector, then extend by
        // linearity: mask(m) = mask(m with lowest bit cleared) ^ row.
        let k = code.msg_len();
        let mut rows = Vec::with_capacity(k);
        for j in 0..k {
            let cw = code.encode(&BitVector::from_int(1 << j, k))?;
            rows.push(bits_to_mask(cw.bits()));
        }
        let mut masks = vec![0u64; 1 << k];
        for m in 1usize..(1 << k) {
            let low = m.trailing_zeros() as usize;
            masks[m] = masks[m & (m - 1)] ^ rows[low];
        }
        Ok(Self {
            code: code.clone(),
            masks,
        })
    }

    pub fn code(&self) -> &PolarCode {
        &self.code
    }

    /// Number of codewords, 2^K.
    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Codeword bit mask for a message integer.
    #[inline]
    pub fn mask(&self, message: usize) -> u64 {
        self.masks[message]
    }

    /// All (message, codeword) pairs in ascending message order.
    pub fn pairs(&self) -> Vec<(BitVector, BitVector)> {
        let (n, k) = (self.code.block_len(), self.code.msg_len());
        self.masks
            .iter()
            .enumerate()
            .map(|(m, &mask)| {
                (
                    BitVector::from_int(m as u64, k),
                    BitVector::from_int(mask, n),
                )
            })
            .collect()
    }

    /// Minimum Hamming weight over nonzero codewords (= minimum
    /// distance, by linearity).
    pub fn min_distance(&self) -> u32 {
        self.masks[1..]
            .iter()
            .map(|m| m.count_ones())
            .min()
            .unwrap_or(0)
    }

    /// Codeword log-scores `-sum_{n: c_n = 1} llr_n - sum_{k: m_k = 1}
    /// prior_k` for every message. Equal to the canonical metric
    /// `sum_n (-1)^{c_n} llr_n / 2 + sum_k (-1)^{m_k} prior_k / 2` up
    /// to a message-independent shift, which cancels in every use.
    fn scores(&self, llr: &[f64], prior: Option<&[f64]>) -> Vec<f64> {
        let n = self.code.block_len();
        let k = self.code.msg_len();
        let cw_tables = byte_sum_tables(llr, n);
        let prior_tables = prior.map(|p| byte_sum_tables(p, k));
        let mut scores = Vec::with_capacity(self.masks.len());
        for (m, &mask) in self.masks.iter().enumerate() {
            let mut s = -byte_table_sum(&cw_tables, mask);
            if let Some(pt) = &prior_tables {
                s -= byte_table_sum(pt, m as u64);
            }
            scores.push(s);
        }
        scores
    }

    /// Bitwise MAP decode: per message bit k the exact posterior
    /// `ln sum_{c: b_k=0} e^s - ln sum_{c: b_k=1} e^s` over the whole
    /// codebook, with optional message-bit priors folded into s.
    pub fn map_decode_bitwise(
        &self,
        llr: &[f64],
        prior: Option<&[f64]>,
    ) -> Result<(Vec<f64>, BitVector)> {
        let out = self.decode_internal(llr, prior, false)?;
        Ok((out.msg_posterior, out.msg_hard))
    }

    /// Bitwise MAP decode that also marginalizes codeword bits, for
    /// extrinsic exchange with a soft detector.
    pub fn soft_decode(&self, llr: &[f64]) -> Result<SoftDecode> {
        self.decode_internal(llr, None, true)
    }

    fn decode_internal(
        &self,
        llr: &[f64],
        prior: Option<&[f64]>,
        want_cw: bool,
    ) -> Result<SoftDecode> {
        let n = self.code.block_len();
        let k = self.code.msg_len();
        if llr.len() != n {
            return Err(Error::InvalidArgument(format!(
                "llr length {} != N = {n}",
                llr.len()
            )));
        }
        if let Some(p) = prior {
            if p.len() != k {
                return Err(Error::InvalidArgument(format!(
                    "prior length {} != K = {k}",
                    p.len()
                )));
            }
        }
        let scores = self.scores(llr, prior);
        let smax = scores.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));

        // Weights relative to the maximum; negligible terms skipped.
        let mut weights = scores;
        for w in &mut weights {
            let d = *w - smax;
            *w = if d < -EXP_CUTOFF { 0.0 } else { d.exp() };
        }

        let cw_posterior = if want_cw {
            Some(codeword_bit_posteriors(&self.masks, &weights, n))
        } else {
            None
        };

        // Message-bit marginals by successive halving: at level k the
        // top half of the folded array is exactly the bit-k = 1 subset.
        let mut msg_posterior = vec![0.0f64; k];
        let mut buf = weights;
        for bit in (0..k).rev() {
            let half = 1usize << bit;
            let (lo, hi) = buf.split_at_mut(half);
            let w1: f64 = hi.iter().sum();
            let w0: f64 = lo.iter().sum();
            msg_posterior[bit] = clamp_llr(llr_from_weights(w0, w1));
            for (l, h) in lo.iter_mut().zip(hi.iter()) {
                *l += *h;
            }
            buf.truncate(half);
        }

        let msg_hard = BitVector::new(
            msg_posterior
                .iter()
                .map(|&p| u8::from(p < 0.0))
                .collect(),
        );
        Ok(SoftDecode {
            msg_posterior,
            msg_hard,
            cw_posterior,
        })
    }

    /// Sequence-ML decode: the message whose codeword maximizes
    /// `sum_n (-1)^{c_n} llr_n`; ties pick the smallest message value.
    pub fn ml_decode(&self, llr: &[f64]) -> Result<BitVector> {
        let n = self.code.block_len();
        if llr.len() != n {
            return Err(Error::InvalidArgument(format!(
                "llr length {} != N = {n}",
                llr.len()
            )));
        }
        let scores = self.scores(llr, None);
        let mut best = 0usize;
        for (m, &s) in scores.iter().enumerate() {
            if s > scores[best] {
                best = m;
            }
        }
        Ok(BitVector::from_int(best as u64, self.code.msg_len()))
    }
}

fn bits_to_mask(bits: &[u8]) -> u64 {
    bits.iter()
        .enumerate()
        .fold(0u64, |acc, (i, b)| acc | (u64::from(*b) << i))
}

/// Per-byte partial-sum tables: `tables[b][v]` is the sum of
/// `values[8b + i]` over the set bits i of v. A masked sum then costs
/// one lookup per byte of the mask.
fn byte_sum_tables(values: &[f64], len: usize) -> Vec<[f64; 256]> {
    let nb = len.div_ceil(8);
    let mut tables = vec![[0.0f64; 256]; nb];
    for (b, table) in tables.iter_mut().enumerate() {
        let width = (len - 8 * b).min(8);
        let limit = 1usize << width;
        for v in 1..limit {
            let low = v.trailing_zeros() as usize;
            table[v] = table[v & (v - 1)] + values[8 * b + low];
        }
    }
    tables
}

#[inline]
fn byte_table_sum(tables: &[[f64; 256]], mask: u64) -> f64 {
    let mut acc = 0.0;
    for (b, table) in tables.iter().enumerate() {
        acc += table[((mask >> (8 * b)) & 0xFF) as usize];
    }
    acc
}

/// Posterior LLR per codeword bit from per-message weights. Weights are
/// first bucketed per (byte, byte value) so each message costs N/8
/// additions instead of N.
fn codeword_bit_posteriors(masks: &[u64], weights: &[f64], n: usize) -> Vec<f64> {
    let nb = n.div_ceil(8);
    let mut acc = vec![[0.0f64; 256]; nb];
    for (m, &w) in weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let mask = masks[m];
        for (b, bucket) in acc.iter_mut().enumerate() {
            bucket[((mask >> (8 * b)) & 0xFF) as usize] += w;
        }
    }
    let mut out = Vec::with_capacity(n);
    for bit in 0..n {
        let (b, i) = (bit / 8, bit % 8);
        let mut w0 = 0.0;
        let mut w1 = 0.0;
        for (v, &w) in acc[b].iter().enumerate() {
            if (v >> i) & 1 == 1 {
                w1 += w;
            } else {
                w0 += w;
            }
        }
        out.push(clamp_llr(llr_from_weights(w0, w1)));
    }
    out
}

#[inline]
fn llr_from_weights(w0: f64, w1: f64) -> f64 {
    if w1 == 0.0 {
        f64::INFINITY
    } else if w0 == 0.0 {
        f64::NEG_INFINITY
    } else {
        w0.ln() - w1.ln()
    }
}
