//! Packet assembly, flat-fading channel application, and least-squares
//! channel estimation.
//!
//! A packet is the signal matrix X = [X_p, X_d]: Hadamard pilot columns
//! followed by the serial-to-parallel data matrix. The channel output is
//! Y = sqrt(1/M_T) H X + W with H constant over the packet and W i.i.d.
//! complex Gaussian of total per-entry variance `noise_variance`.
//!
//! SNR convention: H entries have unit variance, so setting
//! `noise_variance = 10^(-snr_db/10)` makes the nominal SNR equal the
//! average receive SNR per antenna.

use alloc::format;

#[cfg_attr(test, allow(unused_imports))]
use num_traits::Float;

use crate::matrix::{hadamard, qr_solve, ComplexMatrix};
use crate::modem::{modulate, Modulation};
use crate::polar::{BitVector, PolarCode};
use crate::rng::{sample_complex_gaussian, RngStream};
use crate::{Error, Result};

/// Static per-run geometry: antenna counts, pilot length, modulation,
/// and the channel code.
#[derive(Debug, Clone)]
pub struct PacketLayout {
    mt: usize,
    mr: usize,
    pilot_len: usize,
    scheme: Modulation,
    code: PolarCode,
}

impl PacketLayout {
    pub fn new(
        mt: usize,
        mr: usize,
        pilot_len: usize,
        scheme: Modulation,
        code: PolarCode,
    ) -> Result<Self> {
        if mt == 0 || mr == 0 || mt > mr {
            return Err(Error::InvalidArgument(format!(
                "need 0 < M_T <= M_R, got M_T={mt}, M_R={mr}"
            )));
        }
        if !matches!(mt, 1 | 2 | 4 | 8) {
            return Err(Error::InvalidArgument(format!(
                "M_T={mt} unsupported (Hadamard pilots need 1, 2, 4, or 8)"
            )));
        }
        let per_slot = scheme.bits_per_symbol() * mt;
        if code.block_len() % per_slot != 0 {
            return Err(Error::InvalidArgument(format!(
                "block length {} not divisible by B*M_T = {per_slot}",
                code.block_len()
            )));
        }
        if pilot_len < mt {
            return Err(Error::InvalidArgument(format!(
                "pilot length {pilot_len} below M_T={mt}"
            )));
        }
        Ok(Self {
            mt,
            mr,
            pilot_len,
            scheme,
            code,
        })
    }

    pub fn mt(&self) -> usize {
        self.mt
    }

    pub fn mr(&self) -> usize {
        self.mr
    }

    pub fn pilot_len(&self) -> usize {
        self.pilot_len
    }

    pub fn scheme(&self) -> Modulation {
        self.scheme
    }

    pub fn code(&self) -> &PolarCode {
        &self.code
    }

    /// Data slots per packet, L = N / (B * M_T).
    pub fn data_slots(&self) -> usize {
        self.code.block_len() / (self.scheme.bits_per_symbol() * self.mt)
    }

    /// Coded bits carried by one slot, B * M_T.
    pub fn bits_per_slot(&self) -> usize {
        self.scheme.bits_per_symbol() * self.mt
    }

    /// Pilot matrix X_p: Hadamard columns, repeated cyclically when the
    /// pilot block is longer than M_T. Entries are +/-1 (unit power).
    pub fn pilot_matrix(&self) -> ComplexMatrix {
        let h = hadamard(self.mt).expect("validated order");
        ComplexMatrix::from_fn(self.mt, self.pilot_len, |r, c| h[(r, c % self.mt)])
    }
}

/// One channel draw with the receiver's view of it.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    /// True channel, M_R x M_T.
    pub h: ComplexMatrix,
    /// Receiver-side estimate; equals `h` in perfect-CSI mode.
    pub h_hat: ComplexMatrix,
    /// Total complex noise variance per entry of W.
    pub noise_variance: f64,
    pub snr_db: f64,
}

impl ChannelRealization {
    /// Noise variance under the unit-H-variance convention;
    /// an infinite SNR means a noise-free channel.
    pub fn noise_variance_for(snr_db: f64) -> f64 {
        if snr_db == f64::INFINITY {
            0.0
        } else {
            10.0f64.powf(-snr_db / 10.0)
        }
    }

    pub fn perfect(h: ComplexMatrix, snr_db: f64) -> Self {
        let h_hat = h.clone();
        Self {
            h,
            h_hat,
            noise_variance: Self::noise_variance_for(snr_db),
            snr_db,
        }
    }

    pub fn with_estimate(h: ComplexMatrix, h_hat: ComplexMatrix, snr_db: f64) -> Self {
        Self {
            h,
            h_hat,
            noise_variance: Self::noise_variance_for(snr_db),
            snr_db,
        }
    }
}

/// One encoded, modulated packet ready for the channel.
#[derive(Debug, Clone)]
pub struct TransmitFrame {
    pub x_p: ComplexMatrix,
    pub x_d: ComplexMatrix,
    pub message: BitVector,
    pub codeword: BitVector,
}

/// Encode and modulate a message, then serial-to-parallel it: slot t's
/// column carries symbols `t*M_T .. (t+1)*M_T - 1` top to bottom.
pub fn build_frame(message: &BitVector, layout: &PacketLayout) -> Result<TransmitFrame> {
    let codeword = layout.code.encode(message)?;
    let symbols = modulate(&codeword, layout.scheme)?;
    let mt = layout.mt();
    let x_d = ComplexMatrix::from_fn(mt, layout.data_slots(), |m, t| symbols[t * mt + m]);
    Ok(TransmitFrame {
        x_p: layout.pilot_matrix(),
        x_d,
        message: message.clone(),
        codeword,
    })
}

/// Pass a signal matrix through the channel:
/// `Y = sqrt(1/M_T) H X + W`.
pub fn apply_channel(
    x: &ComplexMatrix,
    real: &ChannelRealization,
    rng: &mut RngStream,
) -> Result<ComplexMatrix> {
    if x.rows() != real.h.cols() {
        return Err(Error::InvalidArgument(format!(
            "signal has {} rows but H is {}x{}",
            x.rows(),
            real.h.rows(),
            real.h.cols()
        )));
    }
    let mt = real.h.cols() as f64;
    let w = sample_complex_gaussian(real.h.rows(), x.cols(), real.noise_variance, rng)?;
    Ok(real.h.matmul(x).scale((1.0 / mt).sqrt()).add(&w))
}

/// Least-squares channel estimate from the pilot block:
/// `H_hat = sqrt(M_T) Y_p X_p^H (X_p X_p^H)^{-1}`.
pub fn ls_estimate(y_p: &ComplexMatrix, x_p: &ComplexMatrix) -> Result<ComplexMatrix> {
    if y_p.cols() != x_p.cols() {
        return Err(Error::InvalidArgument(format!(
            "pilot observation has {} columns, pilots have {}",
            y_p.cols(),
            x_p.cols()
        )));
    }
    let mt = x_p.rows() as f64;
    let gram = x_p.matmul(&x_p.hermitian());
    let a = y_p.matmul(&x_p.hermitian());
    // A G^{-1} = (G^{-H} A^H)^H
    let solved = qr_solve(&gram.hermitian(), &a.hermitian())?;
    Ok(solved.hermitian().scale(mt.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::left_pseudo_inverse;
    use crate::modem::hard_demap;
    use num_complex::Complex64;

    fn layout(mt: usize, mr: usize, scheme: Modulation, n: usize, k: usize) -> PacketLayout {
        PacketLayout::new(mt, mr, mt, scheme, PolarCode::build(n, k).unwrap()).unwrap()
    }

    #[test]
    fn frame_shapes_follow_serial_to_parallel() {
        // 16 info bits -> 32 BPSK symbols -> 2x16 data matrix
        let l = layout(2, 2, Modulation::Bpsk, 32, 16);
        let f = build_frame(&BitVector::zeros(16), &l).unwrap();
        assert_eq!((f.x_d.rows(), f.x_d.cols()), (2, 16));

        let l8 = layout(8, 8, Modulation::Qpsk, 32, 16);
        let f8 = build_frame(&BitVector::zeros(16), &l8).unwrap();
        assert_eq!((f8.x_d.rows(), f8.x_d.cols()), (8, 2));
    }

    #[test]
    fn zero_message_maps_to_all_plus_one() {
        let l = layout(2, 2, Modulation::Bpsk, 32, 16);
        let f = build_frame(&BitVector::zeros(16), &l).unwrap();
        for z in f.x_d.entries() {
            assert_eq!(*z, Complex64::new(1.0, 0.0));
        }
    }

    #[test]
    fn frame_roundtrip_recovers_codeword() {
        // demodulating down each column, left to right, must give the
        // codeword bit order back exactly
        let l = layout(4, 4, Modulation::Qpsk, 32, 16);
        let msg = BitVector::from_int(0xBEEF, 16);
        let f = build_frame(&msg, &l).unwrap();
        let mut bits = Vec::new();
        for t in 0..f.x_d.cols() {
            for m in 0..f.x_d.rows() {
                bits.extend(hard_demap(f.x_d[(m, t)], l.scheme()));
            }
        }
        assert_eq!(bits, f.codeword.bits());
    }

    #[test]
    fn layout_rejects_bad_divisibility() {
        // N=8 QPSK over 8 antennas would need 16 bits per slot
        let code = PolarCode::build(8, 4).unwrap();
        assert!(PacketLayout::new(8, 8, 8, Modulation::Qpsk, code).is_err());
    }

    #[test]
    fn layout_rejects_short_pilots() {
        let code = PolarCode::build(32, 16).unwrap();
        assert!(PacketLayout::new(4, 4, 3, Modulation::Bpsk, code).is_err());
    }

    #[test]
    fn noise_free_identity_channel_is_transparent() {
        let real = ChannelRealization::perfect(ComplexMatrix::identity(1), f64::INFINITY);
        let x = ComplexMatrix::from_fn(1, 5, |_, c| Complex64::new(c as f64, -1.0));
        let y = apply_channel(&x, &real, &mut RngStream::new(1, 0)).unwrap();
        assert!(y.sub(&x).max_abs() < 1e-15);
    }

    #[test]
    fn transmit_scaling_is_inverse_sqrt_mt() {
        let real = ChannelRealization::perfect(ComplexMatrix::identity(4), f64::INFINITY);
        let x = ComplexMatrix::from_fn(4, 3, |r, c| Complex64::new((r + c) as f64, 0.0));
        let y = apply_channel(&x, &real, &mut RngStream::new(1, 0)).unwrap();
        assert!(y.sub(&x.scale(0.5)).max_abs() < 1e-15);
    }

    #[test]
    fn received_power_averages_to_one() {
        // unit-power transmit entries and unit-variance H give unit
        // mean receive power per antenna; 3-sigma Monte Carlo bound
        let mut h_rng = RngStream::new(42, 7);
        let x = ComplexMatrix::from_fn(2, 1, |_, _| Complex64::new(1.0, 0.0));
        let draws = 3000;
        let mut acc = 0.0;
        for _ in 0..draws {
            let h = sample_complex_gaussian(2, 2, 1.0, &mut h_rng).unwrap();
            let real = ChannelRealization::perfect(h, f64::INFINITY);
            let y = apply_channel(&x, &real, &mut RngStream::new(0, 0)).unwrap();
            acc += y.frobenius_sqr() / 2.0;
        }
        let mean = acc / draws as f64;
        // per-antenna |y|^2 is Exp(1); SE = 1/sqrt(2*draws)
        let bound = 3.0 / (2.0 * draws as f64).sqrt();
        assert!((mean - 1.0).abs() < bound, "mean {mean}, bound {bound}");
    }

    #[test]
    fn ls_estimate_inverts_noiseless_model() {
        for mt in [2usize, 4, 8] {
            let mut rng = RngStream::new(50, mt as u64);
            let h = sample_complex_gaussian(mt, mt, 1.0, &mut rng).unwrap();
            let x_p = ComplexMatrix::from_fn(mt, mt, |r, c| {
                hadamard(mt).unwrap()[(r, c)]
            });
            let y_p = h.matmul(&x_p).scale((1.0 / mt as f64).sqrt());
            let h_hat = ls_estimate(&y_p, &x_p).unwrap();
            assert!(h_hat.sub(&h).max_abs() < 1e-9, "M_T = {mt}");
        }
    }

    #[test]
    fn ls_estimate_identity_case() {
        let x_p = hadamard(2).unwrap();
        let y_p = x_p.scale((0.5f64).sqrt());
        let h_hat = ls_estimate(&y_p, &x_p).unwrap();
        assert!(h_hat.sub(&ComplexMatrix::identity(2)).max_abs() < 1e-12);
    }

    #[test]
    fn ls_estimate_matches_hand_evaluated_formula() {
        // independent route: adjugate inverse of the 2x2 pilot gram
        let mut rng = RngStream::new(51, 0);
        let h = sample_complex_gaussian(2, 2, 1.0, &mut rng).unwrap();
        let real = ChannelRealization::perfect(h.clone(), 10.0);
        let x_p = hadamard(2).unwrap();
        let y_p = apply_channel(&x_p, &real, &mut RngStream::new(51, 1)).unwrap();

        let got = ls_estimate(&y_p, &x_p).unwrap();

        let g = x_p.matmul(&x_p.hermitian());
        let det = g[(0, 0)] * g[(1, 1)] - g[(0, 1)] * g[(1, 0)];
        let g_inv = ComplexMatrix::from_rows(&[
            &[g[(1, 1)] / det, -g[(0, 1)] / det],
            &[-g[(1, 0)] / det, g[(0, 0)] / det],
        ]);
        let expect = y_p
            .matmul(&x_p.hermitian())
            .matmul(&g_inv)
            .scale(2.0f64.sqrt());
        assert!(got.sub(&expect).max_abs() < 1e-12);
    }

    #[test]
    fn end_to_end_noiseless_inversion() {
        let mut rng = RngStream::new(52, 0);
        let h = sample_complex_gaussian(3, 3, 1.0, &mut rng).unwrap();
        let real = ChannelRealization::perfect(h.clone(), f64::INFINITY);
        let x = sample_complex_gaussian(3, 6, 1.0, &mut rng).unwrap();
        let y = apply_channel(&x, &real, &mut RngStream::new(52, 1)).unwrap();
        let recovered = left_pseudo_inverse(&h)
            .unwrap()
            .matmul(&y)
            .scale((3.0f64).sqrt());
        assert!(recovered.sub(&x).max_abs() < 1e-9);
    }

    #[test]
    fn ls_error_shrinks_with_snr() {
        let mut mse = [0.0f64; 3];
        for (i, snr) in [0.0, 10.0, 20.0].into_iter().enumerate() {
            let mut h_rng = RngStream::new(53, 100 + i as u64);
            let mut w_rng = RngStream::new(53, 200 + i as u64);
            let x_p = hadamard(2).unwrap();
            for _ in 0..300 {
                let h = sample_complex_gaussian(2, 2, 1.0, &mut h_rng).unwrap();
                let real = ChannelRealization::perfect(h.clone(), snr);
                let y_p = apply_channel(&x_p, &real, &mut w_rng).unwrap();
                let err = ls_estimate(&y_p, &x_p).unwrap().sub(&h);
                mse[i] += err.frobenius_sqr();
            }
        }
        assert!(mse[0] > mse[1] && mse[1] > mse[2], "mse = {mse:?}");
    }

    #[test]
    fn pilot_matrix_tiles_cyclically() {
        let code = PolarCode::build(32, 16).unwrap();
        let l = PacketLayout::new(2, 2, 5, Modulation::Bpsk, code).unwrap();
        let p = l.pilot_matrix();
        assert_eq!((p.rows(), p.cols()), (2, 5));
        for c in 0..5 {
            for r in 0..2 {
                assert_eq!(p[(r, c)], p[(r, c % 2)]);
            }
        }
        // gram still invertible
        assert!(ls_estimate(&p.scale(1.0), &p).is_ok());
    }
}
