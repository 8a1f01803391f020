//! Complex sparse (CSR) matrices and a handful of dense helpers.
//!
//! Everything in the simulator that touches a Hilbert-space operator goes
//! through [`CsrMatrix`]. Dense matrices use `nalgebra::DMatrix<C64>`; they
//! only show up for small blocks (single-mode displacement, reduced density
//! matrices, test oracles).

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };
pub const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Compressed-sparse-row complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<C64>,
}

impl CsrMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, indptr: vec![0; nrows + 1], indices: Vec::new(), data: Vec::new() }
    }

    pub fn identity(n: usize) -> Self {
        Self { nrows: n, ncols: n, indptr: (0..=n).collect(), indices: (0..n).collect(), data: vec![ONE; n] }
    }

    pub fn diagonal(diag: &[C64]) -> Self {
        Self::from_triplets(diag.len(), diag.len(), diag.iter().enumerate().map(|(i, &v)| (i, i, v)))
    }

    /// Builds a matrix from `(row, col, value)` triplets. Duplicates are summed
    /// and exact zeros dropped.
    pub fn from_triplets<T>(nrows: usize, ncols: usize, triplets: T) -> Self
    where
        T: IntoIterator<Item = (usize, usize, C64)>,
    {
        let mut rows: Vec<Vec<(usize, C64)>> = vec![Vec::new(); nrows];
        for (i, j, v) in triplets {
            assert!(i < nrows && j < ncols, "triplet ({i}, {j}) out of bounds");
            rows[i].push((j, v));
        }
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        indptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(j, _)| j);
            let mut k = 0;
            while k < row.len() {
                let j = row[k].0;
                let mut acc = ZERO;
                while k < row.len() && row[k].0 == j {
                    acc += row[k].1;
                    k += 1;
                }
                if acc != ZERO {
                    indices.push(j);
                    data.push(acc);
                }
            }
            indptr.push(indices.len());
        }
        Self { nrows, ncols, indptr, indices, data }
    }

    pub fn from_dense(m: &DMatrix<C64>) -> Self {
        let mut trip = Vec::new();
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let v = m[(i, j)];
                if v != ZERO {
                    trip.push((i, j, v));
                }
            }
        }
        Self::from_triplets(m.nrows(), m.ncols(), trip)
    }

    /// Assembles a matrix from raw CSR arrays. Column indices must be sorted per row.
    pub fn from_raw(nrows: usize, ncols: usize, indptr: Vec<usize>, indices: Vec<usize>, data: Vec<C64>) -> Self {
        assert_eq!(indptr.len(), nrows + 1);
        assert_eq!(indices.len(), data.len());
        Self { nrows, ncols, indptr, indices, data }
    }

    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn is_square(&self) -> bool {
        self.nrows == self.ncols
    }

    /// Iterates over stored entries as `(row, col, value)`.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.nrows)
            .flat_map(move |i| (self.indptr[i]..self.indptr[i + 1]).map(move |k| (i, self.indices[k], self.data[k])))
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        (self.indptr[i]..self.indptr[i + 1]).map(move |k| (self.indices[k], self.data[k]))
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.row(i).find(|&(c, _)| c == j).map(|(_, v)| v).unwrap_or(ZERO)
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::from_element(self.nrows, self.ncols, ZERO);
        for (i, j, v) in self.iter() {
            m[(i, j)] += v;
        }
        m
    }

    pub fn adjoint(&self) -> Self {
        Self::from_triplets(self.ncols, self.nrows, self.iter().map(|(i, j, v)| (j, i, v.conj())))
    }

    pub fn scale(&self, s: C64) -> Self {
        if s == ZERO {
            return Self::zeros(self.nrows, self.ncols);
        }
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v *= s);
        out
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        Ok(Self::from_triplets(self.nrows, self.ncols, self.iter().chain(other.iter())))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(-ONE))
    }

    /// Sparse matrix product `self * other`.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        if self.ncols != other.nrows {
            return Err(Error::DimensionMismatch {
                context: "sparse product",
                expected: self.ncols,
                found: other.nrows,
            });
        }
        let mut trip = Vec::new();
        for i in 0..self.nrows {
            for (k, a) in self.row(i) {
                for (j, b) in other.row(k) {
                    trip.push((i, j, a * b));
                }
            }
        }
        Ok(Self::from_triplets(self.nrows, other.ncols, trip))
    }

    pub fn commutator(&self, other: &Self) -> Result<Self> {
        self.mul(other)?.sub(&other.mul(self)?)
    }

    /// Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &Self) -> Self {
        let (r2, c2) = (other.nrows, other.ncols);
        let trip = self.iter().flat_map(|(i, j, a)| other.iter().map(move |(k, l, b)| (i * r2 + k, j * c2 + l, a * b)));
        Self::from_triplets(self.nrows * r2, self.ncols * c2, trip.collect::<Vec<_>>())
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![ZERO; self.nrows];
        self.matvec_acc(ONE, x, &mut y);
        y
    }

    /// `y += alpha * A x`.
    pub fn matvec_acc(&self, alpha: C64, x: &[C64], y: &mut [C64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = ZERO;
            for k in self.indptr[i]..self.indptr[i + 1] {
                acc += self.data[k] * x[self.indices[k]];
            }
            *yi += alpha * acc;
        }
    }

    /// `out += alpha * A * M` where `M` is dense, row-major, `ncols(A) × m`.
    pub fn mul_dense_acc(&self, alpha: C64, m: &[C64], width: usize, out: &mut [C64]) {
        debug_assert_eq!(m.len(), self.ncols * width);
        debug_assert_eq!(out.len(), self.nrows * width);
        for i in 0..self.nrows {
            let orow = &mut out[i * width..(i + 1) * width];
            for k in self.indptr[i]..self.indptr[i + 1] {
                let a = alpha * self.data[k];
                let j = self.indices[k];
                let mrow = &m[j * width..(j + 1) * width];
                for (o, &v) in orow.iter_mut().zip(mrow) {
                    *o += a * v;
                }
            }
        }
    }

    /// Largest entry magnitude, zero for an empty matrix.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        Ok(self.sub(other)?.max_abs())
    }

    /// `‖A − A†‖_max`.
    pub fn hermiticity_error(&self) -> f64 {
        self.max_abs_diff(&self.adjoint()).unwrap_or(f64::INFINITY)
    }

    pub fn expectation(&self, psi: &[C64]) -> C64 {
        let ax = self.matvec(psi);
        psi.iter().zip(&ax).map(|(a, b)| a.conj() * b).sum()
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.nrows != other.nrows || self.ncols != other.ncols {
            return Err(Error::DimensionMismatch { context: "sparse sum", expected: self.nrows, found: other.nrows });
        }
        Ok(())
    }
}

/// Inner product `⟨a|b⟩`.
pub fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

pub fn normalize(a: &mut [C64]) -> f64 {
    let n = norm(a);
    if n > 0.0 {
        a.iter_mut().for_each(|x| *x /= n);
    }
    n
}

/// Matrix exponential by scaling and squaring with a Taylor series.
///
/// Accurate to roughly machine precision for the well-conditioned generators
/// used here (anti-hermitian displacement generators of moderate norm).
pub fn expm(a: &DMatrix<C64>) -> DMatrix<C64> {
    let n = a.nrows();
    let norm1 = (0..n).map(|j| (0..n).map(|i| a[(i, j)].norm()).sum::<f64>()).fold(0.0, f64::max);
    let squarings = if norm1 > 0.5 { (norm1 / 0.5).log2().ceil() as u32 } else { 0 };
    let scaled = a.map(|v| v / 2f64.powi(squarings as i32));
    let mut result = DMatrix::<C64>::identity(n, n);
    let mut term = DMatrix::<C64>::identity(n, n);
    for k in 1..40 {
        term = &term * &scaled / C64::new(k as f64, 0.0);
        result += &term;
        if term.iter().map(|v| v.norm()).fold(0.0, f64::max) < 1e-18 {
            break;
        }
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

/// Dense row-major square matrix helpers used by the master-equation solver.
pub mod dense {
    use super::*;

    /// In-place conjugate transpose of a row-major `n × n` matrix.
    pub fn adjoint_in_place(m: &mut [C64], n: usize) {
        for i in 0..n {
            m[i * n + i] = m[i * n + i].conj();
            for j in (i + 1)..n {
                let a = m[i * n + j];
                let b = m[j * n + i];
                m[i * n + j] = b.conj();
                m[j * n + i] = a.conj();
            }
        }
    }

    pub fn adjoint(m: &[C64], n: usize) -> Vec<C64> {
        let mut out = m.to_vec();
        adjoint_in_place(&mut out, n);
        out
    }

    pub fn trace(m: &[C64], n: usize) -> C64 {
        (0..n).map(|i| m[i * n + i]).sum()
    }

    pub fn outer(a: &[C64], b: &[C64]) -> Vec<C64> {
        let n = a.len();
        let mut out = vec![ZERO; n * b.len()];
        for i in 0..n {
            for (j, bj) in b.iter().enumerate() {
                out[i * b.len() + j] = a[i] * bj.conj();
            }
        }
        out
    }

    /// `⟨ψ|M|ψ⟩`.
    pub fn sandwich(m: &[C64], psi: &[C64]) -> C64 {
        let n = psi.len();
        let mut acc = ZERO;
        for i in 0..n {
            let ci = psi[i].conj();
            if ci == ZERO {
                continue;
            }
            let row = &m[i * n..(i + 1) * n];
            let mut r = ZERO;
            for (v, p) in row.iter().zip(psi) {
                r += v * p;
            }
            acc += ci * r;
        }
        acc
    }

    pub fn hermiticity_error(m: &[C64], n: usize) -> f64 {
        let mut err = 0.0f64;
        for i in 0..n {
            for j in i..n {
                err = err.max((m[i * n + j] - m[j * n + i].conj()).norm());
            }
        }
        err
    }

    /// Replaces `m` by `(m + m†)/2`.
    pub fn symmetrize(m: &mut [C64], n: usize) {
        for i in 0..n {
            m[i * n + i] = C64::new(m[i * n + i].re, 0.0);
            for j in (i + 1)..n {
                let avg = (m[i * n + j] + m[j * n + i].conj()) * 0.5;
                m[i * n + j] = avg;
                m[j * n + i] = avg.conj();
            }
        }
    }

    pub fn to_nalgebra(m: &[C64], n: usize) -> DMatrix<C64> {
        DMatrix::from_row_slice(n, n, m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn triplets_sum_duplicates_and_drop_zeros() {
        let m = CsrMatrix::from_triplets(2, 2, vec![(0, 1, c(1.0)), (0, 1, c(2.0)), (1, 0, c(0.0))]);
        assert_eq!(m.nnz(), 1);
        assert_eq!(m.get(0, 1), c(3.0));
    }

    #[test]
    fn kron_matches_dense() {
        let a = CsrMatrix::from_triplets(2, 2, vec![(0, 1, c(1.0)), (1, 0, I)]);
        let b = CsrMatrix::from_triplets(2, 2, vec![(0, 0, c(2.0)), (1, 1, c(3.0))]);
        let k = a.kron(&b).to_dense();
        assert_eq!(k[(0, 2)], c(2.0));
        assert_eq!(k[(1, 3)], c(3.0));
        assert_eq!(k[(3, 1)], I * 3.0);
        assert_eq!(k[(0, 0)], ZERO);
    }

    #[test]
    fn product_and_adjoint_agree_with_dense() {
        let a = CsrMatrix::from_triplets(3, 3, vec![(0, 1, C64::new(1.0, 2.0)), (2, 0, c(-1.0)), (1, 1, I)]);
        let b = CsrMatrix::from_triplets(3, 3, vec![(1, 2, c(4.0)), (0, 0, C64::new(0.5, -0.5))]);
        let dense = a.to_dense() * b.to_dense();
        assert!((a.mul(&b).unwrap().to_dense() - dense).norm() < 1e-14);
        assert!((a.adjoint().to_dense() - a.to_dense().adjoint()).norm() < 1e-14);
    }

    #[test]
    fn mul_dense_acc_matches_matvec_per_column() {
        let a = CsrMatrix::from_triplets(2, 2, vec![(0, 0, c(1.0)), (0, 1, I), (1, 0, c(2.0))]);
        let m = vec![c(1.0), c(2.0), c(3.0), c(4.0)];
        let mut out = vec![ZERO; 4];
        a.mul_dense_acc(ONE, &m, 2, &mut out);
        let col0 = a.matvec(&[c(1.0), c(3.0)]);
        assert_eq!(out[0], col0[0]);
        assert_eq!(out[2], col0[1]);
    }

    #[test]
    fn expm_of_rotation_generator() {
        let theta = 0.7;
        let g = DMatrix::from_row_slice(2, 2, &[ZERO, c(-theta), c(theta), ZERO]);
        let e = expm(&g);
        assert!((e[(0, 0)].re - theta.cos()).abs() < 1e-14);
        assert!((e[(1, 0)].re - theta.sin()).abs() < 1e-14);
    }

    #[test]
    fn dense_adjoint_in_place() {
        let mut m = vec![c(1.0), I, c(2.0), C64::new(3.0, 1.0)];
        adjoint_in_place_check(&mut m);
    }

    fn adjoint_in_place_check(m: &mut [C64]) {
        let orig = m.to_vec();
        dense::adjoint_in_place(m, 2);
        assert_eq!(m[1], orig[2].conj());
        assert_eq!(m[2], orig[1].conj());
        assert_eq!(m[3], orig[3].conj());
    }
}
