//! Dense complex matrix and vector kernels shared by the filter modules.
//!
//! Everything here is double precision. The only factorization provided is a
//! Cholesky (LL^H) solve for Hermitian positive definite systems with relative
//! diagonal loading; the filter formulas never form an explicit inverse.

use num_complex::Complex64;
use thiserror::Error;

/// Default relative diagonal loading applied before Hermitian solves.
pub const DEFAULT_LOADING: f64 = 1e-7;

pub type ComplexVector = Vec<Complex64>;

#[derive(Debug, Error, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is singular: Cholesky pivot {pivot:.3e} at row {row}")]
    SingularMatrix { row: usize, pivot: f64 },
}

/// Row-major dense complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        ComplexMatrix {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, Complex64::new(1.0, 0.0));
        }
        m
    }

    pub fn from_rows(rows: &[Vec<Complex64>]) -> Self {
        assert!(!rows.is_empty() && !rows[0].is_empty());
        let cols = rows[0].len();
        assert!(rows.iter().all(|r| r.len() == cols));
        ComplexMatrix {
            rows: rows.len(),
            cols,
            data: rows.iter().flatten().copied().collect(),
        }
    }

    /// Column vector from a slice.
    pub fn from_column(v: &[Complex64]) -> Self {
        ComplexMatrix {
            rows: v.len(),
            cols: 1,
            data: v.to_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn add_assign_at(&mut self, i: usize, j: usize, v: Complex64) {
        self.data[i * self.cols + j] += v;
    }

    pub fn column(&self, j: usize) -> ComplexVector {
        assert!(j < self.cols);
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn conj_transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(j, i, self.get(i, j).conj());
            }
        }
        out
    }

    pub fn trace(&self) -> Result<Complex64, LinalgError> {
        if !self.is_square() {
            return Err(LinalgError::DimensionMismatch(format!(
                "trace of non-square {}x{}",
                self.rows, self.cols
            )));
        }
        Ok((0..self.rows).map(|i| self.get(i, i)).sum())
    }

    pub fn matmul(&self, other: &Self) -> Result<Self, LinalgError> {
        if self.cols != other.rows {
            return Err(LinalgError::DimensionMismatch(format!(
                "matmul {}x{} * {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..other.cols {
                    out.add_assign_at(i, j, a * other.get(k, j));
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, v: &[Complex64]) -> Result<ComplexVector, LinalgError> {
        if self.cols != v.len() {
            return Err(LinalgError::DimensionMismatch(format!(
                "matvec {}x{} * len {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok((0..self.rows)
            .map(|i| (0..self.cols).map(|j| self.get(i, j) * v[j]).sum())
            .collect())
    }

    pub fn scale(&self, s: Complex64) -> Self {
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x * s).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self, LinalgError> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(LinalgError::DimensionMismatch(format!(
                "add {}x{} + {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self, LinalgError> {
        Ok(self.add(&other.scale(Complex64::new(-1.0, 0.0)))?)
    }

    /// (A + A^H) / 2, enforcing exact Hermitian symmetry.
    pub fn hermitian_part(&self) -> Self {
        assert!(self.is_square());
        let mut out = Self::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                let v = (self.get(i, j) + self.get(j, i).conj()) * 0.5;
                out.set(i, j, v);
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Rank-1 accumulation `self += w * x * x^H` over the leading `n` entries of x.
    pub fn add_scaled_outer_self(&mut self, x: &[Complex64], w: f64) {
        debug_assert!(self.rows == x.len() && self.cols == x.len());
        for i in 0..x.len() {
            let xi = x[i] * w;
            for j in 0..x.len() {
                self.data[i * self.cols + j] += xi * x[j].conj();
            }
        }
    }
}

/// x * y^H
pub fn outer(x: &[Complex64], y: &[Complex64]) -> ComplexMatrix {
    let mut out = ComplexMatrix::zeros(x.len(), y.len());
    for i in 0..x.len() {
        for j in 0..y.len() {
            out.set(i, j, x[i] * y[j].conj());
        }
    }
    out
}

/// x^H y
pub fn inner(x: &[Complex64], y: &[Complex64]) -> Complex64 {
    assert_eq!(x.len(), y.len());
    x.iter().zip(y).map(|(a, b)| a.conj() * b).sum()
}

pub fn vector_norm(x: &[Complex64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

/// Solves (A + loading * (trace(A).re / N) * I) X = B for Hermitian positive
/// definite A via Cholesky factorization.
///
/// For an all-zero (or non-positive trace) A the loading falls back to an
/// absolute `loading * I` shift so the system stays solvable.
pub fn hermitian_solve(
    a: &ComplexMatrix,
    b: &ComplexMatrix,
    loading: f64,
) -> Result<ComplexMatrix, LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::DimensionMismatch(format!(
            "solve with non-square A {}x{}",
            a.rows, a.cols
        )));
    }
    if b.rows != a.rows {
        return Err(LinalgError::DimensionMismatch(format!(
            "solve A {}x{} vs B {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let n = a.rows;
    let mut shift = 0.0;
    if loading > 0.0 {
        let scale = a.trace()?.re / n as f64;
        shift = if scale > 0.0 { loading * scale } else { loading };
    }

    // Cholesky LL^H on the loaded matrix; lower triangle only.
    let mut l = a.clone();
    for i in 0..n {
        let d = l.get(i, i) + Complex64::new(shift, 0.0);
        l.set(i, i, d);
    }
    for j in 0..n {
        let mut d = l.get(j, j).re;
        for k in 0..j {
            d -= l.get(j, k).norm_sqr();
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(LinalgError::SingularMatrix { row: j, pivot: d });
        }
        let djj = d.sqrt();
        l.set(j, j, Complex64::new(djj, 0.0));
        for i in (j + 1)..n {
            let mut s = l.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k).conj();
            }
            l.set(i, j, s / djj);
        }
    }

    // Forward solve L Y = B, then backward solve L^H X = Y.
    let mut x = b.clone();
    for col in 0..b.cols {
        for i in 0..n {
            let mut s = x.get(i, col);
            for k in 0..i {
                s -= l.get(i, k) * x.get(k, col);
            }
            x.set(i, col, s / l.get(i, i).re);
        }
        for i in (0..n).rev() {
            let mut s = x.get(i, col);
            for k in (i + 1)..n {
                s -= l.get(k, i).conj() * x.get(k, col);
            }
            x.set(i, col, s / l.get(i, i).re);
        }
    }
    Ok(x)
}
