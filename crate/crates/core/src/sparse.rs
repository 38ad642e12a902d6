//! Row-compressed hermitian operators.

use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::fmt17;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Symmetry {
    RealSymmetric,
    Hermitian,
}

/// Square sparse matrix in CSR layout, columns sorted within each row.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseOperator {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<Complex64>,
    symmetry: Symmetry,
}

const PARALLEL_MATVEC_DIM: usize = 8192;

impl SparseOperator {
    /// Assemble from `(row, col, value)` triplets; duplicates are summed in
    /// input order, so equal triplet lists give bitwise equal matrices.
    pub fn from_triplets(dim: usize, triplets: &[(usize, usize, Complex64)]) -> Self {
        let mut counts = vec![0usize; dim + 1];
        for &(r, c, _) in triplets {
            assert!(r < dim && c < dim, "triplet ({r}, {c}) outside dimension {dim}");
            counts[r + 1] += 1;
        }
        for i in 0..dim {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut raw = vec![(0usize, Complex64::new(0.0, 0.0)); triplets.len()];
        for &(r, c, v) in triplets {
            raw[fill[r]] = (c, v);
            fill[r] += 1;
        }
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        for r in 0..dim {
            let row = &mut raw[counts[r]..counts[r + 1]];
            row.sort_by_key(|&(c, _)| c);
            let start = cols.len();
            for &(c, v) in row.iter() {
                if cols.len() > start && *cols.last().unwrap() == c {
                    *vals.last_mut().unwrap() += v;
                } else {
                    cols.push(c);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        let symmetry = if vals.iter().all(|v| v.im == 0.0) { Symmetry::RealSymmetric } else { Symmetry::Hermitian };
        Self { dim, row_ptr, cols, vals, symmetry }
    }

    pub fn from_dense(rows: &[Vec<Complex64>]) -> Self {
        let dim = rows.len();
        let mut t = Vec::new();
        for (r, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), dim, "matrix must be square");
            for (c, &v) in row.iter().enumerate() {
                if v != Complex64::new(0.0, 0.0) {
                    t.push((r, c, v));
                }
            }
        }
        Self::from_triplets(dim, &t)
    }

    pub fn from_real_dense(rows: &[Vec<f64>]) -> Self {
        Self::from_dense(&rows.iter().map(|r| r.iter().map(|&x| Complex64::new(x, 0.0)).collect()).collect::<Vec<_>>())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn symmetry(&self) -> Symmetry {
        self.symmetry
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |p| (self.cols[p], self.vals[p]))
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        let row = &self.cols[self.row_ptr[r]..self.row_ptr[r + 1]];
        match row.binary_search(&c) {
            Ok(p) => self.vals[self.row_ptr[r] + p],
            Err(_) => Complex64::new(0.0, 0.0),
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|r| self.get(r, r).re).collect()
    }

    /// Exact entry-level test `A[i][j] == conj(A[j][i])`.
    pub fn is_hermitian(&self) -> bool {
        (0..self.dim).all(|r| self.row(r).all(|(c, v)| self.get(c, r) == v.conj()))
    }

    pub fn trace(&self) -> f64 {
        self.diagonal().iter().sum()
    }

    /// Maximum absolute row sum, an upper bound on the spectral radius.
    pub fn norm_bound(&self) -> f64 {
        (0..self.dim).map(|r| self.row(r).map(|(_, v)| v.norm()).sum::<f64>()).fold(0.0, f64::max)
    }

    fn row_dot(&self, r: usize, x: &[Complex64]) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for p in self.row_ptr[r]..self.row_ptr[r + 1] {
            acc += self.vals[p] * x[self.cols[p]];
        }
        acc
    }

    /// `y = A x`. Rows are independent, so the result does not depend on
    /// the number of threads.
    pub fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        assert_eq!(x.len(), self.dim);
        assert_eq!(y.len(), self.dim);
        if self.dim >= PARALLEL_MATVEC_DIM {
            y.par_iter_mut().enumerate().for_each(|(r, out)| *out = self.row_dot(r, x));
        } else {
            for (r, out) in y.iter_mut().enumerate() {
                *out = self.row_dot(r, x);
            }
        }
    }

    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut y = vec![Complex64::new(0.0, 0.0); self.dim];
        self.apply(x, &mut y);
        y
    }

    /// `⟨x, A x⟩`, real for hermitian `A`.
    pub fn quadratic_form(&self, x: &[Complex64]) -> f64 {
        let y = self.matvec(x);
        x.iter().zip(&y).map(|(a, b)| (a.conj() * b).re).sum()
    }

    /// Copy with `shift[i]` added to each diagonal entry.
    pub fn add_diagonal(&self, shift: &[f64]) -> Self {
        assert_eq!(shift.len(), self.dim);
        let mut t: Vec<(usize, usize, Complex64)> = Vec::with_capacity(self.nnz() + self.dim);
        for r in 0..self.dim {
            t.extend(self.row(r).map(|(c, v)| (r, c, v)));
            if shift[r] != 0.0 {
                t.push((r, r, Complex64::new(shift[r], 0.0)));
            }
        }
        Self::from_triplets(self.dim, &t)
    }

    /// `Bᴴ B` for a rectangular operator given by rows of `(col, value)`.
    ///
    /// Contributions to `(c₁, c₂)` and `(c₂, c₁)` are accumulated from the
    /// same rows in the same order, so the result is exactly hermitian.
    pub fn gram(dim: usize, rows: &[Vec<(usize, Complex64)>]) -> Self {
        let mut t = Vec::new();
        for row in rows {
            for &(c1, v1) in row {
                for &(c2, v2) in row {
                    t.push((c1, c2, v1.conj() * v2));
                }
            }
        }
        Self::from_triplets(dim, &t)
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<Complex64> {
        let mut m = nalgebra::DMatrix::zeros(self.dim, self.dim);
        for r in 0..self.dim {
            for (c, v) in self.row(r) {
                m[(r, c)] = v;
            }
        }
        m
    }

    /// Matrix Market coordinate format, lower triangle only.
    pub fn write_matrix_market<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let lower: Vec<(usize, usize, Complex64)> =
            (0..self.dim).flat_map(|r| self.row(r).filter(move |&(c, _)| c <= r).map(move |(c, v)| (r, c, v))).collect();
        match self.symmetry {
            Symmetry::RealSymmetric => writeln!(w, "%%MatrixMarket matrix coordinate real symmetric")?,
            Symmetry::Hermitian => writeln!(w, "%%MatrixMarket matrix coordinate complex hermitian")?,
        }
        writeln!(w, "{} {} {}", self.dim, self.dim, lower.len())?;
        for (r, c, v) in lower {
            match self.symmetry {
                Symmetry::RealSymmetric => writeln!(w, "{} {} {}", r + 1, c + 1, fmt17(v.re))?,
                Symmetry::Hermitian => writeln!(w, "{} {} {} {}", r + 1, c + 1, fmt17(v.re), fmt17(v.im))?,
            }
        }
        Ok(())
    }

    pub fn check_hermitian(&self) -> Result<()> {
        if self.is_hermitian() {
            Ok(())
        } else {
            Err(Error::Precondition("operator is not hermitian as stored".into()))
        }
    }
}
