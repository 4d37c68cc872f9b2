//! Dense complex matrices and the small set of linear algebra the
//! receivers need: products, conjugate transpose, Householder QR solves,
//! left pseudo-inverse, and Sylvester Hadamard pilot construction.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use num_complex::Complex64;
#[cfg_attr(test, allow(unused_imports))]
use num_traits::Float;

use crate::{Error, Result};

/// Condition-number estimate above which a solve is rejected.
const COND_LIMIT: f64 = 1e12;

/// Dense complex matrix, row-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// Build from row-major entry slices; rows must be equal length.
    pub fn from_rows(rows: &[&[Complex64]]) -> Self {
        let nrows = rows.len();
        let ncols = if nrows == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(nrows * ncols);
        for r in rows {
            assert_eq!(r.len(), ncols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self {
            rows: nrows,
            cols: ncols,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.data
    }

    /// Column `c` as an owned vector.
    pub fn column(&self, c: usize) -> Vec<Complex64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn set_column(&mut self, c: usize, col: &[Complex64]) {
        assert_eq!(col.len(), self.rows);
        for (r, v) in col.iter().enumerate() {
            self[(r, c)] = *v;
        }
    }

    /// Conjugate transpose A^H.
    pub fn hermitian(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    /// Matrix product `self * rhs`.
    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(
            self.cols, rhs.rows,
            "shape mismatch: {}x{} * {}x{}",
            self.rows, self.cols, rhs.rows, rhs.cols
        );
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a.norm_sqr() == 0.0 {
                    continue;
                }
                for j in 0..rhs.cols {
                    out[(i, j)] += a * rhs[(k, j)];
                }
            }
        }
        out
    }

    /// Matrix-vector product `self * v`.
    pub fn matvec(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(self.cols, v.len());
        let mut out = vec![Complex64::new(0.0, 0.0); self.rows];
        for i in 0..self.rows {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..self.cols {
                acc += self[(i, k)] * v[k];
            }
            out[i] = acc;
        }
        out
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn add(&self, rhs: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    /// Largest entry magnitude.
    pub fn max_abs(&self) -> f64 {
        self.data
            .iter()
            .map(|z| z.norm_sqr().sqrt())
            .fold(0.0, f64::max)
    }

    /// Squared Frobenius norm.
    pub fn frobenius_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &Complex64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

/// Solve `A X = B` by Householder QR (least squares when `A` is tall).
///
/// `A` must have full column rank; a diagonal-ratio condition estimate
/// above 1e12 is rejected as singular.
pub fn qr_solve(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    let (m, n) = (a.rows(), a.cols());
    if m < n {
        return Err(Error::InvalidArgument(format!(
            "qr_solve needs rows >= cols, got {m}x{n}"
        )));
    }
    if b.rows() != m {
        return Err(Error::InvalidArgument(format!(
            "rhs has {} rows, expected {m}",
            b.rows()
        )));
    }
    let mut r = a.clone();
    let mut c = b.clone();
    let p = c.cols();

    // Householder reflections applied column by column to R and the rhs.
    for k in 0..n {
        let mut sigma_sqr = 0.0;
        for i in k..m {
            sigma_sqr += r[(i, k)].norm_sqr();
        }
        let sigma = sigma_sqr.sqrt();
        if sigma == 0.0 {
            return Err(Error::SingularMatrix(format!("zero column {k} in QR")));
        }
        let rkk = r[(k, k)];
        let phase = if rkk.norm_sqr() > 0.0 {
            rkk / rkk.norm_sqr().sqrt()
        } else {
            Complex64::new(1.0, 0.0)
        };
        let alpha = -phase * sigma;

        // v = x - alpha*e1, stored over the column
        let mut v = Vec::with_capacity(m - k);
        v.push(rkk - alpha);
        for i in (k + 1)..m {
            v.push(r[(i, k)]);
        }
        let vnorm_sqr: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        if vnorm_sqr > 0.0 {
            let tau = 2.0 / vnorm_sqr;
            // R[k.., k+1..] -= tau * v * (v^H R)
            for j in (k + 1)..n {
                let mut dot = Complex64::new(0.0, 0.0);
                for i in k..m {
                    dot += v[i - k].conj() * r[(i, j)];
                }
                dot *= tau;
                for i in k..m {
                    let dv = v[i - k] * dot;
                    r[(i, j)] -= dv;
                }
            }
            for j in 0..p {
                let mut dot = Complex64::new(0.0, 0.0);
                for i in k..m {
                    dot += v[i - k].conj() * c[(i, j)];
                }
                dot *= tau;
                for i in k..m {
                    let dv = v[i - k] * dot;
                    c[(i, j)] -= dv;
                }
            }
        }
        r[(k, k)] = alpha;
        for i in (k + 1)..m {
            r[(i, k)] = Complex64::new(0.0, 0.0);
        }
    }

    // Condition estimate from the R diagonal.
    let mut dmax = 0.0f64;
    let mut dmin = f64::INFINITY;
    for k in 0..n {
        let d = r[(k, k)].norm_sqr().sqrt();
        dmax = dmax.max(d);
        dmin = dmin.min(d);
    }
    if dmin == 0.0 || dmax / dmin > COND_LIMIT {
        return Err(Error::SingularMatrix(format!(
            "condition estimate {:.3e} exceeds {COND_LIMIT:.0e}",
            if dmin == 0.0 { f64::INFINITY } else { dmax / dmin }
        )));
    }

    // Back substitution on the upper-triangular system.
    let mut x = ComplexMatrix::zeros(n, p);
    for j in 0..p {
        for i in (0..n).rev() {
            let mut acc = c[(i, j)];
            for k in (i + 1)..n {
                acc -= r[(i, k)] * x[(k, j)];
            }
            x[(i, j)] = acc / r[(i, i)];
        }
    }
    Ok(x)
}

/// Left pseudo-inverse `P = (A^H A)^{-1} A^H`, so `P A = I`.
///
/// Coincides with the plain inverse for square `A`.
pub fn left_pseudo_inverse(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    if a.rows() < a.cols() {
        return Err(Error::InvalidArgument(format!(
            "pseudo-inverse needs rows >= cols, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    qr_solve(a, &ComplexMatrix::identity(a.rows()))
}

/// Sylvester Hadamard matrix of order `n` in {1, 2, 4, 8}; entries are
/// real +/-1 and rows are mutually orthogonal with `H H^T = n I`.
pub fn hadamard(n: usize) -> Result<ComplexMatrix> {
    if !matches!(n, 1 | 2 | 4 | 8) {
        return Err(Error::InvalidArgument(format!(
            "hadamard order {n} unsupported (need 1, 2, 4, or 8)"
        )));
    }
    let mut h = ComplexMatrix::from_rows(&[&[Complex64::new(1.0, 0.0)]]);
    let mut size = 1;
    while size < n {
        let mut next = ComplexMatrix::zeros(2 * size, 2 * size);
        for r in 0..size {
            for c in 0..size {
                let v = h[(r, c)];
                next[(r, c)] = v;
                next[(r, c + size)] = v;
                next[(r + size, c)] = v;
                next[(r + size, c + size)] = -v;
            }
        }
        h = next;
        size *= 2;
    }
    Ok(h)
}
