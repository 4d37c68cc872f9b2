//! Property tests for the algebraic invariants the receivers rely on.

use mimo_core::matrix::{left_pseudo_inverse, ComplexMatrix};
use mimo_core::modem::{demap_llr_awgn, hard_demap, modulate, Modulation};
use mimo_core::polar::{BitVector, Codebook, PolarCode};
use num_complex::Complex64;
use proptest::prelude::*;

fn complex_matrix(rows: usize, cols: usize) -> impl Strategy<Value = ComplexMatrix> {
    proptest::collection::vec((-3.0..3.0f64, -3.0..3.0f64), rows * cols).prop_map(
        move |entries| {
            ComplexMatrix::from_fn(rows, cols, |r, c| {
                let (re, im) = entries[r * cols + c];
                Complex64::new(re, im)
            })
        },
    )
}

proptest! {
    #[test]
    fn product_hermitian_identity(
        (m, k, n) in (1usize..5, 1usize..5, 1usize..5),
        seed in any::<u64>(),
    ) {
        // regenerate matrices from the seed so shapes stay conformable
        let mut rng = mimo_core::rng::RngStream::new(seed, 0);
        let a = mimo_core::rng::sample_complex_gaussian(m, k, 1.0, &mut rng).unwrap();
        let b = mimo_core::rng::sample_complex_gaussian(k, n, 1.0, &mut rng).unwrap();
        let lhs = a.matmul(&b).hermitian();
        let rhs = b.hermitian().matmul(&a.hermitian());
        prop_assert!(lhs.sub(&rhs).max_abs() < 1e-12);
    }

    #[test]
    fn tall_pseudo_inverse_is_left_inverse(a in complex_matrix(5, 3)) {
        match left_pseudo_inverse(&a) {
            Ok(p) => {
                let residual = p.matmul(&a).sub(&ComplexMatrix::identity(3));
                prop_assert!(residual.max_abs() < 1e-9);
            }
            // random matrices may legitimately be near rank-deficient
            Err(mimo_core::Error::SingularMatrix(_)) => {}
            Err(e) => return Err(TestCaseError::fail(format!("{e}"))),
        }
    }

    #[test]
    fn polar_encode_is_gf2_linear(a in 0u64..65536, b in 0u64..65536) {
        let code = PolarCode::build(32, 16).unwrap();
        let va = BitVector::from_int(a, 16);
        let vb = BitVector::from_int(b, 16);
        let lhs = code.encode(&va.xor(&vb)).unwrap();
        let rhs = code.encode(&va).unwrap().xor(&code.encode(&vb).unwrap());
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn sequence_ml_is_scale_invariant(
        llr in proptest::collection::vec(-6.0..6.0f64, 16),
        scale in 0.01..100.0f64,
    ) {
        let code = PolarCode::build(16, 8).unwrap();
        let cb = Codebook::new(&code).unwrap();
        let scaled: Vec<f64> = llr.iter().map(|l| l * scale).collect();
        prop_assert_eq!(cb.ml_decode(&llr).unwrap(), cb.ml_decode(&scaled).unwrap());
    }

    #[test]
    fn modulate_hard_demap_roundtrip(bits in proptest::collection::vec(0u8..2, 16)) {
        for scheme in [Modulation::Bpsk, Modulation::Qpsk] {
            let v = BitVector::new(bits.clone());
            let symbols = modulate(&v, scheme).unwrap();
            let mut recovered = Vec::new();
            for s in &symbols {
                recovered.extend(hard_demap(*s, scheme));
            }
            prop_assert_eq!(recovered.as_slice(), v.bits());
        }
    }

    #[test]
    fn bpsk_llr_odd_symmetry(re in -2.0..2.0f64, im in -2.0..2.0f64, v in 0.05..2.0f64) {
        let y = Complex64::new(re, im);
        let a = demap_llr_awgn(y, v, Modulation::Bpsk).unwrap()[0];
        let b = demap_llr_awgn(-y, v, Modulation::Bpsk).unwrap()[0];
        prop_assert!((a + b).abs() < 1e-9);
    }
}
