//! Lowest eigenpairs of hermitian sparse operators: Lanczos with full
//! reorthogonalization and locking, plus a dense oracle.

use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::fmt17;
use crate::sparse::{SparseOperator, Symmetry};

#[derive(Clone, Debug, PartialEq)]
pub struct EigenPair {
    pub value: f64,
    pub vector: Vec<Complex64>,
    pub residual: f64,
}

/// Default dimension cap for [`dense_eig`].
pub const DENSE_CAP: usize = 4096;

type Vector = Vec<Complex64>;

fn zero() -> Complex64 {
    Complex64::new(0.0, 0.0)
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).fold(zero(), |acc, (x, y)| acc + x.conj() * y)
}

fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

fn axpy(alpha: Complex64, x: &[Complex64], y: &mut [Complex64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Two passes of classical Gram–Schmidt against every vector in `bases`.
fn orthogonalize(w: &mut [Complex64], bases: &[&[Vector]]) {
    for _ in 0..2 {
        for basis in bases {
            for v in basis.iter() {
                let c = dot(v, w);
                axpy(-c, v, w);
            }
        }
    }
}

fn residual(op: &SparseOperator, value: f64, v: &[Complex64]) -> f64 {
    let av = op.matvec(v);
    av.iter().zip(v).map(|(a, x)| (a - value * x).norm_sqr()).sum::<f64>().sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Target {
    Count(usize),
    Below(f64),
}

struct Solver<'a> {
    op: &'a SparseOperator,
    tol: f64,
    max_iter: usize,
    matvecs: usize,
    rng: ChaCha8Rng,
    locked: Vec<EigenPair>,
    best: Vec<(f64, f64)>,
}

impl Solver<'_> {
    fn random_vector(&mut self) -> Vector {
        let n = self.op.dim();
        match self.op.symmetry() {
            Symmetry::RealSymmetric => (0..n).map(|_| Complex64::new(self.rng.random_range(-1.0..1.0), 0.0)).collect(),
            Symmetry::Hermitian => {
                (0..n).map(|_| Complex64::new(self.rng.random_range(-1.0..1.0), self.rng.random_range(-1.0..1.0))).collect()
            }
        }
    }

    /// Fresh unit vector orthogonal to `locked` and `basis`, or `None` if the
    /// complement is numerically empty.
    fn fresh_vector(&mut self, basis: &[Vector]) -> Option<Vector> {
        for _ in 0..3 {
            let mut v = self.random_vector();
            let locked: Vec<Vector> = self.locked.iter().map(|p| p.vector.clone()).collect();
            let before = norm(&v);
            orthogonalize(&mut v, &[&locked, basis]);
            let nv = norm(&v);
            if nv > 1e-8 * before {
                v.iter_mut().for_each(|x| *x /= nv);
                return Some(v);
            }
        }
        None
    }

    /// One Lanczos cycle of at most `len` steps in the complement of the
    /// locked vectors. Returns Ritz pairs (ascending) for the lowest `want`
    /// Ritz values with true residuals.
    fn cycle(&mut self, len: usize, want: usize, lambda: Option<f64>) -> Result<Vec<EigenPair>> {
        let Some(v0) = self.fresh_vector(&[]) else { return Ok(Vec::new()) };
        let locked: Vec<Vector> = self.locked.iter().map(|p| p.vector.clone()).collect();
        let mut basis: Vec<Vector> = vec![v0];
        let mut alpha: Vec<f64> = Vec::new();
        let mut beta: Vec<f64> = Vec::new();
        let scale = self.op.norm_bound().max(f64::MIN_POSITIVE);
        let mut next_check = 20.min(len);
        loop {
            let j = basis.len() - 1;
            if self.matvecs >= self.max_iter {
                return Err(self.no_convergence(want));
            }
            let mut w = self.op.matvec(&basis[j]);
            self.matvecs += 1;
            let a = dot(&basis[j], &w).re;
            axpy(Complex64::new(-a, 0.0), &basis[j], &mut w);
            if j > 0 {
                axpy(Complex64::new(-beta[j - 1], 0.0), &basis[j - 1], &mut w);
            }
            orthogonalize(&mut w, &[&locked, &basis]);
            alpha.push(a);
            let b = norm(&w);
            let steps = alpha.len();
            let done_len = steps >= len;
            if !done_len && steps >= next_check {
                next_check = (steps * 3 / 2).max(steps + 10).min(len);
                let (vals, bottom) = tridiagonal_eigen(&alpha, &beta, false);
                if converged_estimates(&vals.0, &bottom, b, want, lambda, self.tol) {
                    break;
                }
            }
            if done_len {
                break;
            }
            if b <= 1e-12 * scale {
                // Invariant subspace: continue from a fresh orthogonal vector
                // with a zero coupling, which splits the tridiagonal matrix.
                match self.fresh_vector(&basis) {
                    Some(v) => {
                        beta.push(0.0);
                        basis.push(v);
                    }
                    None => break,
                }
            } else {
                w.iter_mut().for_each(|x| *x /= b);
                beta.push(b);
                basis.push(w);
            }
        }
        basis.truncate(alpha.len());
        beta.truncate(alpha.len().saturating_sub(1));
        let ((vals, vecs), _) = tridiagonal_eigen(&alpha, &beta, true);
        let vecs = vecs.unwrap();
        let mut out = Vec::new();
        for (idx, &theta) in vals.iter().enumerate() {
            if out.len() >= want && lambda.is_none_or(|l| theta > l) {
                break;
            }
            let mut y = vec![zero(); self.op.dim()];
            for (s, v) in vecs.column(idx).iter().zip(&basis) {
                axpy(Complex64::new(*s, 0.0), v, &mut y);
            }
            let ny = norm(&y);
            y.iter_mut().for_each(|x| *x /= ny);
            let res = residual(self.op, theta, &y);
            self.matvecs += 1;
            out.push(EigenPair { value: theta, vector: y, residual: res });
        }
        Ok(out)
    }

    fn no_convergence(&self, want: usize) -> Error {
        let mut best: Vec<(f64, f64)> = self.locked.iter().map(|p| (p.value, p.residual)).chain(self.best.iter().copied()).collect();
        best.sort_by(|a, b| a.0.total_cmp(&b.0));
        Error::NoConvergence {
            iterations: self.matvecs,
            wanted: want,
            converged: self.locked.len(),
            best_values: best.iter().map(|p| p.0).collect(),
            best_residuals: best.iter().map(|p| p.1).collect(),
        }
    }

    fn run(&mut self, target: Target) -> Result<Vec<EigenPair>> {
        let n = self.op.dim();
        let mut len = match target {
            Target::Count(k) => (2 * k + 60).max(100),
            Target::Below(_) => 200,
        };
        loop {
            let avail = n - self.locked.len();
            if avail == 0 {
                break;
            }
            let (want, lambda, threshold) = match target {
                Target::Count(k) => {
                    let mut vals: Vec<f64> = self.locked.iter().map(|p| p.value).collect();
                    vals.sort_by(f64::total_cmp);
                    let thr = if vals.len() >= k { vals[k - 1] } else { f64::INFINITY };
                    (k.saturating_sub(self.locked.len()) + 1, None, thr)
                }
                Target::Below(l) => (1, Some(l), l),
            };
            let ritz = self.cycle(len.min(avail), want, lambda)?;
            self.best = ritz.iter().map(|p| (p.value, p.residual)).collect();
            let Some(first) = ritz.first() else { break };
            if first.residual <= self.tol && first.value > threshold - self.tol.max(1e-12 * threshold.abs()) {
                break;
            }
            let before = self.locked.len();
            for p in ritz {
                if p.residual > self.tol || lambda.is_some_and(|l| p.value > l) {
                    break;
                }
                self.locked.push(p);
            }
            if self.locked.len() == before {
                len = (len * 2).min(avail);
            }
        }
        let mut out = std::mem::take(&mut self.locked);
        out.sort_by(|a, b| a.value.total_cmp(&b.value));
        match target {
            Target::Count(k) => {
                if out.len() < k {
                    self.locked = out;
                    return Err(self.no_convergence(k));
                }
                out.truncate(k);
            }
            Target::Below(l) => out.retain(|p| p.value <= l),
        }
        Ok(out)
    }
}

/// Eigen-decomposition of the symmetric tridiagonal matrix with diagonal
/// `alpha` and off-diagonal `beta`; values ascending, with the bottom
/// components of the eigenvectors.
#[allow(clippy::type_complexity)]
fn tridiagonal_eigen(alpha: &[f64], beta: &[f64], vectors: bool) -> ((Vec<f64>, Option<DMatrix<f64>>), Vec<f64>) {
    let m = alpha.len();
    let mut t = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alpha[i];
        if i + 1 < m {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let bottom: Vec<f64> = order.iter().map(|&i| eig.eigenvectors[(m - 1, i)].abs()).collect();
    let vecs = vectors.then(|| DMatrix::from_fn(m, m, |r, c| eig.eigenvectors[(r, order[c])]));
    ((vals, vecs), bottom)
}

fn converged_estimates(vals: &[f64], bottom: &[f64], b: f64, want: usize, lambda: Option<f64>, tol: f64) -> bool {
    let mut needed = want.min(vals.len());
    if let Some(l) = lambda {
        needed = needed.max(vals.iter().take_while(|&&v| v <= l).count() + 1).min(vals.len());
    }
    needed > 0 && (0..needed).all(|i| b * bottom[i] < 0.1 * tol)
}

/// The `k` lowest eigenpairs of a hermitian operator, ascending.
///
/// Each cycle starts from a seeded random vector orthogonal to the locked
/// pairs, runs Lanczos with full reorthogonalization, and locks converged
/// Ritz pairs in ascending order. The run ends when a fresh cycle's lowest
/// converged Ritz value is not below the `k`-th locked value, which catches
/// copies of degenerate eigenvalues missed by earlier cycles. `max_iter`
/// bounds the total number of operator applications.
pub fn lanczos_lowest(op: &SparseOperator, k: usize, tol: f64, max_iter: usize, seed: u64) -> Result<Vec<EigenPair>> {
    op.check_hermitian()?;
    if k == 0 || k >= op.dim() {
        return Err(Error::Domain(format!("need 0 < k < dim, got k={k}, dim={}", op.dim())));
    }
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tolerance must be positive, got {tol}")));
    }
    solver(op, tol, max_iter, seed).run(Target::Count(k))
}

/// Every eigenpair with value `≤ lambda`, ascending.
pub fn lanczos_below(op: &SparseOperator, lambda: f64, tol: f64, max_iter: usize, seed: u64) -> Result<Vec<EigenPair>> {
    op.check_hermitian()?;
    if !lambda.is_finite() || !(tol > 0.0) {
        return Err(Error::Domain(format!("need finite cutoff and positive tolerance, got {lambda}, {tol}")));
    }
    solver(op, tol, max_iter, seed).run(Target::Below(lambda))
}

fn solver(op: &SparseOperator, tol: f64, max_iter: usize, seed: u64) -> Solver<'_> {
    Solver { op, tol, max_iter, matvecs: 0, rng: ChaCha8Rng::seed_from_u64(seed), locked: Vec::new(), best: Vec::new() }
}

/// Full spectrum by dense hermitian diagonalization.
pub fn dense_eig(op: &SparseOperator) -> Result<Vec<EigenPair>> {
    dense_eig_with_cap(op, DENSE_CAP)
}

pub fn dense_eig_with_cap(op: &SparseOperator, cap: usize) -> Result<Vec<EigenPair>> {
    if op.dim() > cap {
        return Err(Error::Resource(format!("dense solve of dimension {} exceeds cap {cap}", op.dim())));
    }
    op.check_hermitian()?;
    let eig = SymmetricEigen::new(op.to_dense());
    let mut order: Vec<usize> = (0..op.dim()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    Ok(order
        .into_iter()
        .map(|i| {
            let value = eig.eigenvalues[i];
            let vector: Vector = eig.eigenvectors.column(i).iter().copied().collect();
            let residual = residual(op, value, &vector);
            EigenPair { value, vector, residual }
        })
        .collect())
}

/// Number of eigenvalues `< lambda` by Sylvester's law of inertia: the
/// count of negative pivots of an `LDLᴴ` factorization of `op − λI`,
/// without pivoting, in band storage after reordering by `perm`
/// (`perm[new] = old`). A pivot below `1e-14·‖op‖` in magnitude marks `λ`
/// as numerically on the spectrum; the shift is then nudged down by
/// `1e-10·‖op‖` and the factorization repeated.
pub fn count_below(op: &SparseOperator, lambda: f64, perm: Option<&[usize]>) -> Result<usize> {
    op.check_hermitian()?;
    let n = op.dim();
    let identity: Vec<usize>;
    let perm = match perm {
        Some(p) => {
            if p.len() != n {
                return Err(Error::Domain(format!("permutation length {} differs from dimension {n}", p.len())));
            }
            p
        }
        None => {
            identity = (0..n).collect();
            &identity
        }
    };
    let mut inv = vec![usize::MAX; n];
    for (new, &old) in perm.iter().enumerate() {
        if old >= n || inv[old] != usize::MAX {
            return Err(Error::Domain("ordering is not a permutation".into()));
        }
        inv[old] = new;
    }
    let mut band = 0;
    for r in 0..n {
        for (c, _) in op.row(r) {
            band = band.max(inv[r].abs_diff(inv[c]));
        }
    }
    if (band as u128 + 1) * n as u128 > 200_000_000 {
        return Err(Error::Resource(format!("band storage {} x {} too large", n, band + 1)));
    }
    let scale = op.norm_bound().max(f64::MIN_POSITIVE);
    let mut shift = lambda;
    for _ in 0..8 {
        if let Some(count) = band_inertia(op, shift, perm, &inv, band, scale) {
            return Ok(count);
        }
        shift -= 1e-10 * scale;
    }
    Err(Error::NoConvergence { iterations: 8, wanted: 1, converged: 0, best_values: vec![lambda], best_residuals: Vec::new() })
}

/// Negative pivots of `P(op − shift)Pᵀ = LDLᴴ`, or `None` on a tiny pivot.
fn band_inertia(op: &SparseOperator, shift: f64, perm: &[usize], inv: &[usize], band: usize, scale: f64) -> Option<usize> {
    let n = op.dim();
    let w = band + 1;
    // a[i*w + (i - j)] holds entry (i, j) of the lower band, j ≤ i.
    let mut a = vec![zero(); n * w];
    for (i, &old) in perm.iter().enumerate() {
        for (c, v) in op.row(old) {
            let j = inv[c];
            if j <= i {
                a[i * w + (i - j)] += v;
            }
        }
        a[i * w] -= shift;
    }
    let mut negatives = 0;
    let mut col = vec![zero(); w];
    for k in 0..n {
        let d = a[k * w].re;
        if d.abs() < 1e-14 * scale {
            return None;
        }
        if d < 0.0 {
            negatives += 1;
        }
        let last = (k + band).min(n - 1);
        // col[i - k] = l_ik·d = a_ik before scaling.
        for i in k + 1..=last {
            col[i - k] = a[i * w + (i - k)];
        }
        for i in k + 1..=last {
            let lik = col[i - k] / d;
            if lik == zero() {
                continue;
            }
            let row = &mut a[i * w..(i + 1) * w];
            for j in k + 1..=i {
                row[i - j] -= lik * col[j - k].conj();
            }
        }
    }
    Some(negatives)
}

/// Group ascending values into clusters; a new cluster starts where the gap
/// exceeds `rel_gap` times the larger neighbour. Returns `(mean, size)`.
pub fn clusters(values: &[f64], rel_gap: f64) -> Vec<(f64, usize)> {
    let mut out: Vec<(f64, usize)> = Vec::new();
    let mut start = 0;
    for i in 0..values.len() {
        let split = i + 1 == values.len() || values[i + 1] - values[i] > rel_gap * values[i].abs().max(values[i + 1].abs());
        if split {
            let block = &values[start..=i];
            out.push((block.iter().sum::<f64>() / block.len() as f64, block.len()));
            start = i + 1;
        }
    }
    out
}

/// CSV `index,value,residual`.
pub fn write_eigen_csv<W: Write>(mut w: W, pairs: &[EigenPair]) -> std::io::Result<()> {
    writeln!(w, "index,value,residual")?;
    for (i, p) in pairs.iter().enumerate() {
        writeln!(w, "{},{},{}", i, fmt17(p.value), fmt17(p.residual))?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VectorSidecar {
    pub dim: usize,
    pub count: usize,
    pub complex: bool,
    pub layout: &'static str,
}

/// Eigenvectors as little-endian `f64`, real and imaginary parts interleaved
/// for complex data; returns the sidecar description.
pub fn write_vectors<W: Write>(mut w: W, pairs: &[EigenPair]) -> std::io::Result<VectorSidecar> {
    let dim = pairs.first().map_or(0, |p| p.vector.len());
    let complex = pairs.iter().any(|p| p.vector.iter().any(|x| x.im != 0.0));
    for p in pairs {
        for x in &p.vector {
            w.write_all(&x.re.to_le_bytes())?;
            if complex {
                w.write_all(&x.im.to_le_bytes())?;
            }
        }
    }
    Ok(VectorSidecar {
        dim,
        count: pairs.len(),
        complex,
        layout: if complex { "row-major vectors, interleaved re/im f64 little-endian" } else { "row-major vectors, f64 little-endian" },
    })
}
