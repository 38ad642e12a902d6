//! Weyl-law fits, Cesàro statistics of matrix-element series, density-one
//! extraction and the horizontal/vertical classification of eigenvectors.

use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::discretize::{build_sector_operator, build_torus_sector, Discretization};
use crate::eigensolve::{count_below, lanczos_below, EigenPair};
use crate::error::{Error, Result};
use crate::exact_heisenberg::{geometric_grid, linear_fit, Sector, SpectralDatum, SpectrumList};
use crate::model::ContactModel;
use crate::scalar::{fmt17, KahanSum};
use crate::sparse::SparseOperator;

/// Grid size of [`weyl_fit`].
pub const WEYL_FIT_POINTS: usize = 32;

/// A nondecreasing counting function with a validity cutoff.
pub trait Counting {
    fn count(&self, lambda: f64) -> Result<f64>;
    fn lambda_max(&self) -> f64;
}

impl Counting for SpectrumList<f64> {
    fn count(&self, lambda: f64) -> Result<f64> {
        Ok(self.counting(lambda)? as f64)
    }

    fn lambda_max(&self) -> f64 {
        SpectrumList::lambda_max(self)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeylFit {
    pub constant: f64,
    pub exponent: f64,
    pub r_squared: f64,
    pub lambda_lo: f64,
    pub lambda_hi: f64,
    pub points: usize,
}

/// Least-squares fit of `log N(λ) = log C + p log λ` on a geometric grid of
/// [`WEYL_FIT_POINTS`] values in `[lambda_lo, lambda_hi]`.
pub fn weyl_fit(spectrum: &impl Counting, lambda_lo: f64, lambda_hi: f64) -> Result<WeylFit> {
    if !(lambda_lo > 0.0 && lambda_lo < lambda_hi) {
        return Err(Error::Domain(format!("need 0 < lambda_lo < lambda_hi, got [{lambda_lo}, {lambda_hi}]")));
    }
    if lambda_hi > spectrum.lambda_max() {
        return Err(Error::OutOfRange { value: lambda_hi, max: spectrum.lambda_max() });
    }
    let grid = geometric_grid(lambda_lo, lambda_hi, WEYL_FIT_POINTS);
    let mut xs = Vec::with_capacity(grid.len());
    let mut ys = Vec::with_capacity(grid.len());
    for &l in &grid {
        let n = spectrum.count(l)?;
        if n <= 0.0 {
            return Err(Error::Domain(format!("empty fit window: N({l}) = 0")));
        }
        xs.push(l.ln());
        ys.push(n.ln());
    }
    let (exponent, intercept, r_squared) = linear_fit(&xs, &ys);
    Ok(WeylFit { constant: intercept.exp(), exponent, r_squared, lambda_lo, lambda_hi, points: grid.len() })
}

/// A counting function given in closed form, valid up to `lambda_max`.
pub struct CountingFn<F> {
    pub f: F,
    pub lambda_max: f64,
}

impl<F: Fn(f64) -> f64> Counting for CountingFn<F> {
    fn count(&self, lambda: f64) -> Result<f64> {
        Ok((self.f)(lambda))
    }

    fn lambda_max(&self) -> f64 {
        self.lambda_max
    }
}

/// Eigenvalues `≤ lambda_max` of a discretized model collected over sectors.
#[derive(Clone, Debug)]
pub struct AssembledSpectrum {
    /// `(eigenvalue, m)`, ascending.
    pub values: Vec<(f64, i64)>,
    pub lambda_max: f64,
    pub sectors: i64,
}

impl Counting for AssembledSpectrum {
    fn count(&self, lambda: f64) -> Result<f64> {
        if lambda > self.lambda_max {
            return Err(Error::OutOfRange { value: lambda, max: self.lambda_max });
        }
        Ok(self.values.partition_point(|v| v.0 <= lambda) as f64)
    }

    fn lambda_max(&self) -> f64 {
        self.lambda_max
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AssemblyOptions {
    pub n_grid: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        Self { n_grid: 48, tol: 1e-6, max_iter: 2_000_000, seed: 0 }
    }
}

/// Highest sector that can hold an eigenvalue `≤ lambda`: the lowest level
/// of sector `m` sits near `|m|·min(c_a c_b)`, so one extra sector of margin
/// beyond `λ / min(c_a c_b)` is kept.
pub fn sector_bound(model: &ContactModel, lambda: f64) -> i64 {
    let n = 64;
    let l = model.lattice;
    let mut c_min = f64::INFINITY;
    for i in 0..n {
        for j in 0..n {
            let (x, y) = (i as f64 * l.lx / n as f64, j as f64 * l.ly / n as f64);
            c_min = c_min.min(model.ca(x, y) * model.cb(x, y));
        }
    }
    let quanta = 2.0 * std::f64::consts::PI / l.lz;
    (lambda / (c_min * quanta)).ceil() as i64 + 1
}

/// Sector operator for any `m`, torus sector included.
pub fn sector_discretization(model: &ContactModel, m: i64, n_grid: usize) -> Result<Discretization> {
    if m == 0 {
        build_torus_sector(model, n_grid)
    } else {
        build_sector_operator(model, m, n_grid)
    }
}

/// Every eigenvalue `≤ lambda_max` over the sectors `|m| ≤` [`sector_bound`].
///
/// With real frame coefficients the operator of sector `−m` is the entrywise
/// complex conjugate of sector `m`, so only `m ≥ 0` is solved and the
/// eigenvalues of `m > 0` are recorded for both signs.
pub fn assemble_sector_spectrum(model: &ContactModel, lambda_max: f64, options: &AssemblyOptions) -> Result<AssembledSpectrum> {
    model.validate()?;
    let bound = sector_bound(model, lambda_max);
    let per_sector: Vec<Result<Vec<(f64, i64)>>> = (0..=bound)
        .into_par_iter()
        .map(|m| {
            let d = sector_discretization(model, m, options.n_grid)?;
            let pairs = lanczos_below(&d.op, lambda_max, options.tol, options.max_iter, options.seed.wrapping_add(m as u64))?;
            let mut out: Vec<(f64, i64)> = pairs.iter().map(|p| (p.value, m)).collect();
            if m > 0 {
                out.extend(pairs.iter().map(|p| (p.value, -m)));
            }
            Ok(out)
        })
        .collect();
    let mut values = Vec::new();
    for r in per_sector {
        values.extend(r?);
    }
    values.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(AssembledSpectrum { values, lambda_max, sectors: bound })
}

/// Counting function known on a fixed set of cutoffs.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CountingGrid {
    /// `(λ, N(λ))`, ascending in `λ`.
    pub points: Vec<(f64, u64)>,
    pub sectors: i64,
}

impl Counting for CountingGrid {
    fn count(&self, lambda: f64) -> Result<f64> {
        self.points
            .iter()
            .find(|p| (p.0 - lambda).abs() <= 1e-12 * lambda.abs())
            .map(|p| p.1 as f64)
            .ok_or_else(|| Error::Domain(format!("counting function not sampled at {lambda}")))
    }

    fn lambda_max(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.0)
    }
}

/// Cutoffs used by [`weyl_fit`] on `[lo, hi]`.
pub fn weyl_fit_grid(lo: f64, hi: f64) -> Vec<f64> {
    geometric_grid(lo, hi, WEYL_FIT_POINTS)
}

/// `N(λ)` at each cutoff, summed over the sectors `|m| ≤` [`sector_bound`],
/// by inertia counts ([`count_below`]) of `A_m − λ`. Cutoffs are visited in
/// descending order within a sector and the sector is left at the first zero
/// count. Sectors `±m` share their spectrum.
pub fn assemble_sector_counts(model: &ContactModel, cutoffs: &[f64], n_grid: usize) -> Result<CountingGrid> {
    model.validate()?;
    let mut lambdas: Vec<f64> = cutoffs.to_vec();
    lambdas.sort_by(f64::total_cmp);
    let top = *lambdas.last().ok_or_else(|| Error::Domain("no cutoffs".into()))?;
    let bound = sector_bound(model, top);
    let per_sector: Vec<Result<Vec<u64>>> = (0..=bound)
        .into_par_iter()
        .map(|m| {
            let d = sector_discretization(model, m, n_grid)?;
            let perm = d.band_ordering();
            let mut counts = vec![0u64; lambdas.len()];
            for (i, &l) in lambdas.iter().enumerate().rev() {
                let c = count_below(&d.op, l, Some(&perm))? as u64;
                counts[i] = if m == 0 { c } else { 2 * c };
                if c == 0 {
                    break;
                }
            }
            Ok(counts)
        })
        .collect();
    let mut total = vec![0u64; lambdas.len()];
    for r in per_sector {
        for (t, c) in total.iter_mut().zip(r?) {
            *t += c;
        }
    }
    Ok(CountingGrid { points: lambdas.into_iter().zip(total).collect(), sectors: bound })
}

/// Diagonal matrix elements `⟨Aφ_n, φ_n⟩` ordered by eigenvalue. Each entry
/// carries a weight: the multiplicity for exact-model clusters represented
/// by one element, one for individual eigenpairs.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixElementSeries {
    entries: Vec<(f64, f64, u64)>,
    pub label: String,
}

impl MatrixElementSeries {
    pub fn new(label: impl Into<String>, entries: Vec<(f64, f64)>) -> Result<Self> {
        Self::weighted(label, entries.into_iter().map(|(l, v)| (l, v, 1)).collect())
    }

    pub fn weighted(label: impl Into<String>, entries: Vec<(f64, f64, u64)>) -> Result<Self> {
        if entries.iter().any(|e| !e.0.is_finite() || !e.1.is_finite()) {
            return Err(Error::Domain("series entries must be finite".into()));
        }
        if entries.windows(2).any(|w| w[1].0 < w[0].0) {
            return Err(Error::Domain("series eigenvalues must be nondecreasing".into()));
        }
        Ok(Self { entries, label: label.into() })
    }

    /// Series over an exact flat spectrum, one entry per datum weighted by
    /// its multiplicity.
    pub fn from_exact(label: impl Into<String>, spectrum: &SpectrumList<f64>, value: impl Fn(&SpectralDatum<f64>) -> f64) -> Self {
        let entries = spectrum.data().iter().map(|d| (d.eigenvalue, value(d), d.multiplicity)).collect();
        Self { entries, label: label.into() }
    }

    /// Concentration elements of the exact spectrum.
    pub fn concentration(spectrum: &SpectrumList<f64>) -> Self {
        Self::from_exact("concentration", spectrum, |d| d.concentration_element())
    }

    pub fn entries(&self) -> &[(f64, f64, u64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn map(&self, label: impl Into<String>, f: impl Fn(f64) -> f64) -> Self {
        Self { entries: self.entries.iter().map(|&(l, v, w)| (l, f(v), w)).collect(), label: label.into() }
    }

    /// Values with each entry repeated by its weight, ordered by eigenvalue.
    pub fn expanded(&self) -> Vec<f64> {
        self.entries.iter().flat_map(|&(_, v, w)| std::iter::repeat_n(v, w as usize)).collect()
    }

    fn below(&self, lambda: f64) -> Result<&[(f64, f64, u64)]> {
        let n = self.entries.partition_point(|e| e.0 <= lambda);
        if n == 0 {
            return Err(Error::Domain(format!("series '{}' has no entries below {lambda}", self.label)));
        }
        Ok(&self.entries[..n])
    }

    /// Cesàro mean `(1/N(λ)) Σ_{λ_n ≤ λ} value_n`.
    pub fn cesaro_mean(&self, lambda: f64) -> Result<f64> {
        self.weighted_mean(lambda, |v| v)
    }

    /// `(1/N(λ)) Σ_{λ_n ≤ λ} |value_n − center|²`.
    pub fn variance(&self, lambda: f64, center: f64) -> Result<f64> {
        self.weighted_mean(lambda, |v| (v - center) * (v - center))
    }

    fn weighted_mean(&self, lambda: f64, f: impl Fn(f64) -> f64) -> Result<f64> {
        let e = self.below(lambda)?;
        let total: u64 = e.iter().map(|x| x.2).sum();
        let sum: KahanSum<f64> = e.iter().map(|x| x.2 as f64 * f(x.1)).collect();
        Ok(sum.value() / total as f64)
    }

    /// CSV export: `eigenvalue,value,weight`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "eigenvalue,value,weight")?;
        for &(l, v, k) in &self.entries {
            writeln!(w, "{},{},{}", fmt17(l), fmt17(v), k)?;
        }
        Ok(())
    }
}

/// Series `⟨f φ_n, φ_n⟩ = Σ_a f(a)|ψ_a|²` of a multiplication operator over
/// eigenpairs of a sector discretization.
pub fn local_weyl_series(label: impl Into<String>, disc: &Discretization, pairs: &[EigenPair], f: impl Fn(f64, f64) -> f64 + Sync) -> Result<MatrixElementSeries> {
    let fv = disc.sample(&f);
    let entries: Vec<(f64, f64)> = pairs
        .par_iter()
        .map(|p| {
            let s: KahanSum<f64> = p.vector.iter().zip(&fv).map(|(x, f)| f * x.norm_sqr()).collect();
            (p.value, s.value())
        })
        .collect();
    MatrixElementSeries::new(label, entries)
}

/// Fitted slope of `log(N₀(λ)/N(λ))` against `log λ` on a geometric grid.
pub fn torus_fraction_slope(spectrum: &SpectrumList<f64>, lo: f64, hi: f64) -> Result<f64> {
    let grid = geometric_grid(lo, hi, WEYL_FIT_POINTS);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &l in &grid {
        let (t, n) = (spectrum.torus_counting(l)?, spectrum.counting(l)?);
        if t == 0 {
            return Err(Error::Domain(format!("no torus eigenvalues below {l}")));
        }
        xs.push(l.ln());
        ys.push((t as f64 / n as f64).ln());
    }
    Ok(linear_fit(&xs, &ys).0)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DensityOneSet {
    pub kept: Vec<bool>,
    pub density_estimate: f64,
    /// `T_k` for `k = 1, 2, …`: indices from which the running mean stays
    /// below `4^{-k}`.
    pub levels: Vec<usize>,
}

impl DensityOneSet {
    /// Threshold in force at index `n`: `2^{-k}` for the largest active
    /// level `k`, and `1` before the first level.
    pub fn threshold(&self, n: usize) -> f64 {
        let k = self.levels.partition_point(|&t| t <= n);
        0.5f64.powi(k as i32)
    }
}

/// Constructive Koopman–von Neumann extraction of a density-one set along
/// which a nonnegative sequence with vanishing Cesàro mean tends to zero.
///
/// With `c_n` the running mean of `u_0..u_n`, level `k` starts at
/// `T_k = 1 + max{n : c_n ≥ 4^{-k}}` when the mean is below `4^{-k}` at the
/// end of the data. Index `n` is kept iff `u_n` is below the threshold of
/// [`DensityOneSet::threshold`]. Past `T_k` at most a `2^{-k}` fraction of
/// the indices exceed `2^{-k}` (Markov), so the discarded set has density
/// zero when every level is eventually reached.
pub fn kvn_extract(values: &[f64]) -> Result<DensityOneSet> {
    if let Some(v) = values.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(Error::Domain(format!("values must be finite and nonnegative, found {v}")));
    }
    if values.is_empty() {
        return Err(Error::Domain("empty sequence".into()));
    }
    let mut means = Vec::with_capacity(values.len());
    let mut acc = KahanSum::new();
    for (n, v) in values.iter().enumerate() {
        acc.add(*v);
        means.push(acc.value() / (n + 1) as f64);
    }
    let mut levels = Vec::new();
    for k in 1..=60 {
        let bound = 0.25f64.powi(k);
        if *means.last().unwrap() >= bound {
            break;
        }
        let last_above = means.iter().rposition(|c| *c >= bound);
        levels.push(last_above.map_or(0, |i| i + 1));
    }
    let mut set = DensityOneSet { kept: Vec::new(), density_estimate: 0.0, levels };
    set.kept = values.iter().enumerate().map(|(n, v)| *v < set.threshold(n)).collect();
    set.density_estimate = set.kept.iter().filter(|k| **k).count() as f64 / values.len() as f64;
    Ok(set)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuantumLimitClass {
    /// `⟨Z*Zφ, φ⟩ / (⟨Z*Zφ, φ⟩ + ⟨(X*X + Y*Y)φ, φ⟩)`.
    pub sigma_fraction: f64,
    pub vertical: f64,
    pub horizontal: f64,
    /// Both energies vanish; the fraction is reported as `0`.
    pub degenerate: bool,
}

/// Share of vertical energy of an eigenvector: near one for concentration
/// on the characteristic cone, near zero for the cotangent bulk.
pub fn quantum_limit_classify(vector: &[Complex64], vertical: &SparseOperator, horizontal: &SparseOperator) -> Result<QuantumLimitClass> {
    let norm2: f64 = vector.iter().map(|x| x.norm_sqr()).sum();
    if norm2 == 0.0 {
        return Err(Error::Domain("zero vector".into()));
    }
    if vertical.dim() != vector.len() || horizontal.dim() != vector.len() {
        return Err(Error::Domain("operator and vector dimensions differ".into()));
    }
    let v = vertical.quadratic_form(vector) / norm2;
    let h = horizontal.quadratic_form(vector) / norm2;
    let scale = vertical.norm_bound().max(horizontal.norm_bound());
    let degenerate = (v + h).abs() <= 1e-12 * scale;
    let sigma_fraction = if degenerate { 0.0 } else { (v / (v + h)).clamp(0.0, 1.0) };
    Ok(QuantumLimitClass { sigma_fraction, vertical: v, horizontal: h, degenerate })
}

/// `true` for torus-sector data.
pub fn is_torus(d: &SpectralDatum<f64>) -> bool {
    matches!(d.sector, Sector::Torus { .. })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_power_law() {
        let f = weyl_fit(&CountingFn { f: |l: f64| l * l, lambda_max: 100.0 }, 1.0, 100.0).unwrap();
        assert!((f.constant - 1.0).abs() < 1e-12);
        assert!((f.exponent - 2.0).abs() < 1e-12);
        assert!(weyl_fit(&CountingFn { f: |_| 0.0, lambda_max: 10.0 }, 1.0, 10.0).is_err());
        assert!(weyl_fit(&CountingFn { f: |l: f64| l, lambda_max: 10.0 }, 1.0, 20.0).is_err());
    }

    #[test]
    fn constant_series() {
        let s = MatrixElementSeries::new("one", (1..50).map(|i| (i as f64, 1.0)).collect()).unwrap();
        for l in [1.0, 10.0, 49.0] {
            assert_eq!(s.cesaro_mean(l).unwrap(), 1.0);
            assert_eq!(s.variance(l, 1.0).unwrap(), 0.0);
        }
        assert!(s.cesaro_mean(0.5).is_err());
        assert!(MatrixElementSeries::new("bad", vec![(2.0, 0.0), (1.0, 0.0)]).is_err());
    }

    #[test]
    fn kvn_thresholds_and_errors() {
        assert!(kvn_extract(&[0.1, -0.1]).is_err());
        let s = kvn_extract(&[0.0; 10]).unwrap();
        assert_eq!(s.density_estimate, 1.0);
        assert_eq!(s.threshold(0), 0.5f64.powi(s.levels.len() as i32));
    }

    #[test]
    fn classification_degenerate_case() {
        let z = SparseOperator::from_real_dense(&[vec![0.0, 0.0], vec![0.0, 0.0]]);
        let c = quantum_limit_classify(&[Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)], &z, &z).unwrap();
        assert!(c.degenerate);
        assert_eq!(c.sigma_fraction, 0.0);
        assert!(quantum_limit_classify(&[Complex64::new(0.0, 0.0); 2], &z, &z).is_err());
    }
}
