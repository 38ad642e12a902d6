//! Closed-form spectrum of the flat Heisenberg nilmanifold.
//!
//! The quotient `Γ\G` with `Γ = {x, y ∈ √(2π)ℤ, z ∈ 2πℤ}` carries the
//! sub-Laplacian `X_H² + Y_H²` with `X_H = ∂x`, `Y_H = ∂y − x∂z`. Fourier
//! decomposition in `z` splits its spectrum into two families:
//!
//! * oscillator sectors `m ≠ 0`: eigenvalues `(2ℓ+1)|m|`, each of
//!   multiplicity `|m|` (Landau levels of a magnetic torus with `|m|` flux
//!   quanta);
//! * the torus sector `m = 0`: eigenvalues `2π(j² + k²)` on the lattice
//!   `(j, k) ∈ ℤ²`, one per lattice point.

use std::cmp::Ordering;
use std::io::Write;

use crate::error::{Error, Result};
use crate::scalar::{fmt17, KahanSum, Real};

/// Popp volume of the fundamental domain, `(√(2π))² · 2π = 4π²`.
///
/// The lattice periods are `√(2π)` in `x` and `y` and `2π` in `z`, and the
/// Popp density of the flat structure is Lebesgue measure `dx dy dz`.
pub const FLAT_POPP_VOLUME: f64 = 4.0 * std::f64::consts::PI * std::f64::consts::PI;

/// Leading Weyl constant `P(M_H)/32 = π²/8` of the flat model.
pub const FLAT_WEYL_CONSTANT: f64 = FLAT_POPP_VOLUME / 32.0;

/// Default cap on the number of stored spectral entries.
pub const DEFAULT_MAX_ENTRIES: usize = 50_000_000;

/// Sector label of a spectral datum.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Sector {
    /// Landau level `ℓ` of the `e^{imz}` sector, `m ≠ 0`.
    Oscillator { l: u64, m: i64 },
    /// Lattice point `(j, k)` of the `m = 0` torus sector.
    Torus { j: i64, k: i64 },
}

impl Sector {
    fn kind(&self) -> &'static str {
        match self {
            Sector::Oscillator { .. } => "oscillator",
            Sector::Torus { .. } => "torus",
        }
    }

    fn rank(&self) -> u8 {
        match self {
            Sector::Oscillator { .. } => 0,
            Sector::Torus { .. } => 1,
        }
    }
}

/// One eigenvalue of the flat model with its sector label.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralDatum<T> {
    pub eigenvalue: T,
    pub sector: Sector,
    pub multiplicity: u64,
}

impl<T: Real> SpectralDatum<T> {
    pub fn oscillator(l: u64, m: i64) -> Self {
        assert!(m != 0, "oscillator sectors have m != 0");
        let level = T::from_u64(2 * l + 1).unwrap() * T::from_u64(m.unsigned_abs()).unwrap();
        Self { eigenvalue: level, sector: Sector::Oscillator { l, m }, multiplicity: m.unsigned_abs() }
    }

    pub fn torus(j: i64, k: i64) -> Self {
        let r2 = T::from_i64(j * j + k * k).unwrap();
        Self { eigenvalue: T::lit(2.0) * T::PI() * r2, sector: Sector::Torus { j, k }, multiplicity: 1 }
    }

    /// Vertical-momentum fraction `m²/(m² + λ)`, the diagonal matrix element
    /// of the order-zero symbol `h_Z²/(g* + h_Z²)` which equals one on the
    /// characteristic cone.
    pub fn concentration_element(&self) -> T {
        match self.sector {
            Sector::Oscillator { l, m } => {
                let m = T::from_u64(m.unsigned_abs()).unwrap();
                let level = T::from_u64(2 * l + 1).unwrap();
                m / (m + level)
            }
            Sector::Torus { .. } => T::zero(),
        }
    }
}

/// All eigenvalues of the flat model up to a cutoff, sorted ascending.
#[derive(Clone, Debug)]
pub struct SpectrumList<T> {
    data: Vec<SpectralDatum<T>>,
    cumulative: Vec<u64>,
    lambda_max: T,
}

fn oscillator_entry_count(lambda_max: f64) -> u128 {
    let mut count = 0u128;
    let mut l = 0u64;
    while ((2 * l + 1) as f64) <= lambda_max {
        count += 2 * (lambda_max / (2 * l + 1) as f64).floor() as u128;
        l += 1;
    }
    count
}

/// Enumerate every eigenvalue `≤ lambda_max` with the default memory budget.
pub fn enumerate_spectrum<T: Real>(lambda_max: T) -> Result<SpectrumList<T>> {
    enumerate_spectrum_with_budget(lambda_max, DEFAULT_MAX_ENTRIES)
}

pub fn enumerate_spectrum_with_budget<T: Real>(lambda_max: T, max_entries: usize) -> Result<SpectrumList<T>> {
    if !(lambda_max > T::zero()) || !lambda_max.is_finite() {
        return Err(Error::Domain(format!("lambda_max must be positive and finite, got {lambda_max}")));
    }
    let cap = lambda_max.to_f64_lossy();
    let torus_estimate = (cap / 2.0 + 4.0 * (cap / (2.0 * std::f64::consts::PI)).sqrt() + 8.0) as u128;
    let estimate = oscillator_entry_count(cap) + torus_estimate;
    if estimate > max_entries as u128 {
        return Err(Error::Resource(format!(
            "spectrum up to {cap} needs about {estimate} entries, budget is {max_entries}"
        )));
    }

    let mut data = Vec::with_capacity(estimate as usize);
    let mut l = 0u64;
    loop {
        let level = T::from_u64(2 * l + 1).unwrap();
        if level > lambda_max {
            break;
        }
        let mut m = 1i64;
        while level * T::from_i64(m).unwrap() <= lambda_max {
            data.push(SpectralDatum::oscillator(l, m));
            data.push(SpectralDatum::oscillator(l, -m));
            m += 1;
        }
        l += 1;
    }
    let radius = (cap / (2.0 * std::f64::consts::PI)).sqrt().ceil() as i64 + 1;
    for j in -radius..=radius {
        for k in -radius..=radius {
            let d = SpectralDatum::<T>::torus(j, k);
            if d.eigenvalue <= lambda_max {
                data.push(d);
            }
        }
    }
    data.sort_by(compare_datum);

    let mut running = 0u64;
    let cumulative = data
        .iter()
        .map(|d| {
            running += d.multiplicity;
            running
        })
        .collect();
    Ok(SpectrumList { data, cumulative, lambda_max })
}

fn compare_datum<T: Real>(a: &SpectralDatum<T>, b: &SpectralDatum<T>) -> Ordering {
    a.eigenvalue
        .partial_cmp(&b.eigenvalue)
        .unwrap_or(Ordering::Equal)
        .then(a.sector.rank().cmp(&b.sector.rank()))
        .then_with(|| match (a.sector, b.sector) {
            (Sector::Oscillator { l: l1, m: m1 }, Sector::Oscillator { l: l2, m: m2 }) => {
                l1.cmp(&l2).then(m1.cmp(&m2))
            }
            (Sector::Torus { j: j1, k: k1 }, Sector::Torus { j: j2, k: k2 }) => j1.cmp(&j2).then(k1.cmp(&k2)),
            _ => Ordering::Equal,
        })
}

impl<T: Real> SpectrumList<T> {
    pub fn data(&self) -> &[SpectralDatum<T>] {
        &self.data
    }

    pub fn lambda_max(&self) -> T {
        self.lambda_max
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Number of entries (not multiplicities) with eigenvalue `≤ lambda`.
    fn entries_below(&self, lambda: T) -> usize {
        self.data.partition_point(|d| d.eigenvalue <= lambda)
    }

    /// Spectral counting function `N(λ)`, multiplicities included.
    pub fn counting(&self, lambda: T) -> Result<u64> {
        if lambda > self.lambda_max {
            return Err(Error::OutOfRange { value: lambda.to_f64_lossy(), max: self.lambda_max.to_f64_lossy() });
        }
        let n = self.entries_below(lambda);
        Ok(if n == 0 { 0 } else { self.cumulative[n - 1] })
    }

    /// Torus-sector counting function `N₀(λ)`.
    pub fn torus_counting(&self, lambda: T) -> Result<u64> {
        if lambda > self.lambda_max {
            return Err(Error::OutOfRange { value: lambda.to_f64_lossy(), max: self.lambda_max.to_f64_lossy() });
        }
        let n = self.entries_below(lambda);
        Ok(self.data[..n].iter().filter(|d| matches!(d.sector, Sector::Torus { .. })).count() as u64)
    }

    /// Multiplicity-weighted mean of the concentration element over the
    /// eigenvalues `≤ lambda`.
    pub fn concentration_mean(&self, lambda: T) -> Result<T> {
        let total = self.counting(lambda)?;
        if total == 0 {
            return Err(Error::Domain("no eigenvalues below lambda".into()));
        }
        let n = self.entries_below(lambda);
        let sum: KahanSum<T> = self.data[..n]
            .iter()
            .map(|d| T::from_u64(d.multiplicity).unwrap() * d.concentration_element())
            .collect();
        Ok(sum.value() / T::from_u64(total).unwrap())
    }

    /// Eigenvalues merged by value (within `1e-12` relative), with summed
    /// multiplicities. Sector identity is dropped in this view.
    pub fn aggregated(&self) -> Vec<(T, u64)> {
        let tol = T::lit(1e-12);
        let mut out: Vec<(T, u64)> = Vec::new();
        for d in &self.data {
            match out.last_mut() {
                Some((value, mult)) if (d.eigenvalue - *value).abs() <= tol * T::one().max(value.abs()) => {
                    *mult += d.multiplicity;
                }
                _ => out.push((d.eigenvalue, d.multiplicity)),
            }
        }
        out
    }

    /// CSV export: `eigenvalue,sector_kind,l,m,j,k,multiplicity`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "eigenvalue,sector_kind,l,m,j,k,multiplicity")?;
        for d in &self.data {
            let (l, m, j, k) = match d.sector {
                Sector::Oscillator { l, m } => (l.to_string(), m.to_string(), String::new(), String::new()),
                Sector::Torus { j, k } => (String::new(), String::new(), j.to_string(), k.to_string()),
            };
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                fmt17(d.eigenvalue.to_f64_lossy()),
                d.sector.kind(),
                l,
                m,
                j,
                k,
                d.multiplicity
            )?;
        }
        Ok(())
    }
}

/// Jacobi theta sum `Σ_{j∈ℤ} exp(−2πj²t)`, truncated once terms drop below
/// `tol` relative to the running sum.
pub fn torus_theta<T: Real>(t: T, tol: T) -> T {
    let two_pi = T::lit(2.0) * T::PI();
    let mut sum = T::one();
    let mut j = 1u64;
    loop {
        let jj = T::from_u64(j * j).unwrap();
        let term = T::lit(2.0) * (-two_pi * jj * t).exp();
        sum = sum + term;
        if term < tol * T::lit(1e-3) || term == T::zero() {
            break;
        }
        j += 1;
    }
    sum
}

/// Closed-form heat trace `Tr e^{tΔ_H} = Σ_ℓ 2x_ℓ/(1−x_ℓ)² + θ(t)²` with
/// `x_ℓ = e^{−(2ℓ+1)t}`.
///
/// Each oscillator level contributes `Σ_{m≠0} |m| x^{|m|} = 2x/(1−x)²`. The
/// `ℓ`-sum stops at the first `L` for which the tail bound
///
/// ```text
/// Σ_{ℓ≥L} 2x_ℓ/(1−x_ℓ)² ≤ 2 e^{−(2L+1)t} / ((1 − e^{−2t}) (1 − e^{−(2L+1)t})²)
/// ```
///
/// is below `tol`; the bound follows from `x_ℓ ≤ x_L` in the denominator and
/// summing the geometric series in the numerator.
pub fn heat_trace_closed_form<T: Real>(t: T, tol: T) -> Result<T> {
    if !(t > T::zero()) || !t.is_finite() {
        return Err(Error::Domain(format!("heat trace needs t > 0, got {t}")));
    }
    if !(tol > T::zero()) {
        return Err(Error::Domain(format!("tolerance must be positive, got {tol}")));
    }
    let two = T::lit(2.0);
    let ratio = T::one() - (-two * t).exp();
    let mut acc = KahanSum::new();
    let mut l = 0u64;
    loop {
        let a = T::from_u64(2 * l + 1).unwrap() * t;
        let x = (-a).exp();
        let one_minus = -(-a).exp_m1();
        let tail = two * x / (ratio * one_minus * one_minus);
        if tail < tol {
            break;
        }
        acc.add(two * x / (one_minus * one_minus));
        l += 1;
    }
    let theta = torus_theta(t, tol);
    Ok(acc.value() + theta * theta)
}

/// Least-squares slope and intercept of `ys` against `xs`, with `r²`.
pub(crate) fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let ss_res: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    (slope, intercept, r2)
}

/// Fitted `N₀(λ) ≈ C λ^p` for the torus sector on a geometric grid.
/// Returns `(C, p)`.
pub fn torus_counting_fit(spectrum: &SpectrumList<f64>, lo: f64, hi: f64) -> Result<(f64, f64)> {
    let grid = geometric_grid(lo, hi, 32);
    let mut xs = Vec::with_capacity(grid.len());
    let mut ys = Vec::with_capacity(grid.len());
    for &l in &grid {
        let n = spectrum.torus_counting(l)?;
        xs.push(l.ln());
        ys.push((n as f64).ln());
    }
    let (slope, intercept, _) = linear_fit(&xs, &ys);
    Ok((intercept.exp(), slope))
}

pub(crate) fn geometric_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| match i {
            0 => lo,
            i if i + 1 == n => hi,
            i => (a + (b - a) * i as f64 / (n - 1) as f64).exp(),
        })
        .collect()
}
