//! Finite-difference discretizations of `−Δ_sR` on `Γ\G`.
//!
//! Every builder discretizes the energy form `∫ |Xf|² + |Yf|² dμ` with
//! `μ = h²·Popp`: node masses `m_a = h_a² ρ(a) h_x h_y (h_z)` and one
//! weighted difference per lattice link, with `ρ = (c_a c_b)^{-2}` and the
//! frame factors evaluated at link midpoints. Link weights carry the product
//! `h_a h_b` of the density at the two ends. The stored matrix is the
//! symmetric form `M^{-1/2} K M^{-1/2}` of the stiffness `K`, which is exactly
//! hermitian and has the spectrum of `−Δ_μ = X*X + Y*Y` (adjoints in
//! `L²(μ)`). The divergence terms `div_μ(X)X + div_μ(Y)Y` are not assembled
//! separately: they are what the adjoint of the weighted form produces, and
//! [`ContactModel::divergence`] gives them analytically for comparison.
//!
//! In the Fourier sector `e^{iκz}`, `κ = 2πm/L_z`, left invariance under `Γ`
//! forces `g(x + L_x, y) = e^{iκ L_x y} g(x, y)` and `Y` acts as
//! `c_b(∂_y − iκx)`. The `y`-links carry the Peierls factor `e^{−iκ x h_y}`,
//! so every plaquette encloses the same flux `κ h_x h_y` and the twisted
//! boundary closes only when `κ L_x L_y ∈ 2πℤ`.

use num_complex::Complex64;

use crate::eigensolve::{dense_eig, lanczos_lowest, DENSE_CAP};
use crate::error::{Error, Result};
use crate::model::{ContactModel, FourierSeries, Lattice};
use crate::sparse::SparseOperator;

/// A discretized operator together with its node masses.
#[derive(Clone, Debug)]
pub struct Discretization {
    /// `M^{-1/2} K M^{-1/2}`.
    pub op: SparseOperator,
    /// Node masses `m_a`; an eigenvector `ψ` of `op` is the function
    /// `g = ψ/√m`, and `Σ f_a |ψ_a|²` approximates `∫ f|g|² dμ`.
    pub mass: Vec<f64>,
    pub n_grid: usize,
    /// Fourier sector `m`, `None` for the full 3D grid.
    pub sector: Option<i64>,
    pub lattice: Lattice,
}

impl Discretization {
    /// `(x, y)` of a sector node, or `(x, y, z)` packed as `[x, y, z]`.
    pub fn node(&self, idx: usize) -> [f64; 3] {
        let n = self.n_grid;
        let (hx, hy, hz) = (self.lattice.lx / n as f64, self.lattice.ly / n as f64, self.lattice.lz / n as f64);
        match self.sector {
            Some(_) => [(idx / n) as f64 * hx, (idx % n) as f64 * hy, 0.0],
            None => [(idx / (n * n)) as f64 * hx, ((idx / n) % n) as f64 * hy, (idx % n) as f64 * hz],
        }
    }

    /// Node order with small bandwidth on the periodic grid: each axis is
    /// folded as `0, n−1, 1, n−2, …`, so neighbours across the wrap sit at
    /// most two places apart per axis. Returns `perm[new] = old`.
    pub fn band_ordering(&self) -> Vec<usize> {
        let n = self.n_grid;
        let fold = |p: usize| if p % 2 == 0 { p / 2 } else { n - 1 - p / 2 };
        match self.sector {
            Some(_) => (0..n * n).map(|k| fold(k / n) * n + fold(k % n)).collect(),
            None => (0..n * n * n).map(|k| (fold(k / (n * n)) * n + fold((k / n) % n)) * n + fold(k % n)).collect(),
        }
    }

    /// Values of `f(x, y)` at the nodes.
    pub fn sample(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        (0..self.op.dim()).map(|i| {
            let p = self.node(i);
            f(p[0], p[1])
        })
        .collect()
    }
}

/// Popp volume `L_z ∬ (c_a c_b)^{-2} dx dy` by the tensor trapezoid rule on
/// `quad_n²` nodes, spectrally accurate for trigonometric integrands.
///
/// With `α_g = α_H/(c_a c_b)`, `α_g ∧ dα_g = (c_a c_b)^{-2} α_H ∧ dα_H` and
/// `α_H ∧ dα_H = dx dy dz`; see [`ContactModel::popp_density`].
pub fn popp_volume(model: &ContactModel, quad_n: usize) -> Result<f64> {
    if quad_n < 8 {
        return Err(Error::Domain(format!("quadrature needs at least 8 nodes per axis, got {quad_n}")));
    }
    model.validate()?;
    let l = model.lattice;
    let (hx, hy) = (l.lx / quad_n as f64, l.ly / quad_n as f64);
    let mut sum = 0.0;
    for i in 0..quad_n {
        for j in 0..quad_n {
            sum += model.popp_density(i as f64 * hx, j as f64 * hy);
        }
    }
    Ok(l.lz * sum * hx * hy)
}

/// Wave number `κ = 2πm/L_z` of sector `m`, after the flux check.
fn sector_wavenumber(lattice: &Lattice, m: i64) -> Result<f64> {
    let kappa = 2.0 * std::f64::consts::PI * m as f64 / lattice.lz;
    let flux = kappa * lattice.lx * lattice.ly / (2.0 * std::f64::consts::PI);
    if (flux - flux.round()).abs() > 1e-9 {
        return Err(Error::Configuration(format!(
            "sector {m}: flux κ·Lx·Ly = 2π·{flux} is not a multiple of 2π on this lattice"
        )));
    }
    Ok(kappa)
}

struct Assembly {
    triplets: Vec<(usize, usize, Complex64)>,
    diag: Vec<f64>,
}

impl Assembly {
    fn new(dim: usize) -> Self {
        Self { triplets: Vec::new(), diag: vec![0.0; dim] }
    }

    /// Energy `w |φ f_b − f_a|²`.
    fn link(&mut self, a: usize, b: usize, w: f64, phase: Complex64) {
        self.diag[a] += w;
        self.diag[b] += w;
        self.triplets.push((a, b, -w * phase));
        self.triplets.push((b, a, -w * phase.conj()));
    }

    fn finish(mut self, mass: &[f64]) -> SparseOperator {
        let s: Vec<f64> = mass.iter().map(|m| 1.0 / m.sqrt()).collect();
        for t in &mut self.triplets {
            t.2 *= s[t.0] * s[t.1];
        }
        for (a, d) in self.diag.iter().enumerate() {
            self.triplets.push((a, a, Complex64::new(d * (s[a] * s[a]), 0.0)));
        }
        SparseOperator::from_triplets(mass.len(), &self.triplets)
    }
}

fn check_grid(n_grid: usize) -> Result<()> {
    if n_grid < 8 {
        return Err(Error::Domain(format!("grids need n_grid ≥ 8, got {n_grid}")));
    }
    Ok(())
}

/// Link weights of a sector grid: `(x-links, y-links)` indexed by node.
fn sector_weights(model: &ContactModel, n: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let l = model.lattice;
    let (hx, hy) = (l.lx / n as f64, l.ly / n as f64);
    let mut wx = vec![0.0; n * n];
    let mut wy = vec![0.0; n * n];
    let mut mass = vec![0.0; n * n];
    for i in 0..n {
        let x = i as f64 * hx;
        for j in 0..n {
            let y = j as f64 * hy;
            let a = i * n + j;
            let ca = model.ca(x + 0.5 * hx, y);
            wx[a] = ca * ca * model.popp_density(x + 0.5 * hx, y) * hy / hx;
            let cb = model.cb(x, y + 0.5 * hy);
            wy[a] = cb * cb * model.popp_density(x, y + 0.5 * hy) * hx / hy;
            mass[a] = model.popp_density(x, y) * hx * hy;
        }
    }
    (wx, wy, mass)
}

fn build_sector(model: &ContactModel, m: i64, n: usize) -> Result<Discretization> {
    check_grid(n)?;
    model.validate()?;
    let kappa = sector_wavenumber(&model.lattice, m)?;
    let l = model.lattice;
    let (hx, hy) = (l.lx / n as f64, l.ly / n as f64);
    let (wx, wy, base_mass) = sector_weights(model, n);
    let h: Vec<f64> = (0..n * n).map(|a| model.density((a / n) as f64 * hx, (a % n) as f64 * hy)).collect();
    let mass: Vec<f64> = base_mass.iter().zip(&h).map(|(m, h)| m * (h * h)).collect();
    let mut asm = Assembly::new(n * n);
    for i in 0..n {
        let x = i as f64 * hx;
        for j in 0..n {
            let a = i * n + j;
            let y = j as f64 * hy;
            let bx = ((i + 1) % n) * n + j;
            let phase_x = if i + 1 == n { Complex64::from_polar(1.0, kappa * l.lx * y) } else { Complex64::new(1.0, 0.0) };
            asm.link(a, bx, wx[a] * (h[a] * h[bx]), phase_x);
            let by = i * n + (j + 1) % n;
            asm.link(a, by, wy[a] * (h[a] * h[by]), Complex64::from_polar(1.0, -kappa * x * hy));
        }
    }
    Ok(Discretization { op: asm.finish(&mass), mass, n_grid: n, sector: Some(m), lattice: l })
}

/// Magnetic operator of the `e^{imz}` sector on `n_grid²` twisted nodes.
pub fn build_sector_operator(model: &ContactModel, m: i64, n_grid: usize) -> Result<Discretization> {
    if m == 0 {
        return Err(Error::Domain("sector m = 0 is the torus sector; use build_torus_sector".into()));
    }
    build_sector(model, m, n_grid)
}

/// Periodic five-point operator of the `m = 0` sector.
pub fn build_torus_sector(model: &ContactModel, n_grid: usize) -> Result<Discretization> {
    build_sector(model, 0, n_grid)
}

/// Closed-form spectrum of the flat torus-sector scheme,
/// `(2 − 2cos(2πj/n))/h_x² + (2 − 2cos(2πk/n))/h_y²`, ascending.
pub fn flat_torus_scheme_spectrum(lattice: &Lattice, n: usize) -> Vec<f64> {
    let (hx, hy) = (lattice.lx / n as f64, lattice.ly / n as f64);
    let tau = 2.0 * std::f64::consts::PI;
    let mut v: Vec<f64> = (0..n)
        .flat_map(|j| {
            (0..n).map(move |k| {
                (2.0 - 2.0 * (tau * j as f64 / n as f64).cos()) / (hx * hx) + (2.0 - 2.0 * (tau * k as f64 / n as f64).cos()) / (hy * hy)
            })
        })
        .collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Fourier modes represented on an `n`-point `z` grid.
pub fn full3d_modes(n: usize) -> std::ops::RangeInclusive<i64> {
    -((n as i64 - 1) / 2)..=(n as i64 / 2)
}

/// Operator on `n_grid³` nodes with `f(x + L_x, y, z − L_x y) = f(x, y, z)`.
///
/// Crossing `x = L_x` at `y_j` shifts `z` by `L_x y_j = j·(L_x L_y/L_z)·h_z`,
/// a whole number of planes whenever `L_x L_y / L_z` is an integer (one for
/// the default lattice). The `y`-links move along `(0, 1, −x)` and land
/// between `z` planes; the shift is applied by trigonometric interpolation
/// over the modes of [`full3d_modes`], which acts on mode `m` as the sector
/// Peierls factor. The spectrum is therefore the union of the sector spectra
/// over those modes.
pub fn build_full3d(model: &ContactModel, n_grid: usize) -> Result<Discretization> {
    let n = n_grid;
    check_grid(n)?;
    model.validate()?;
    let l = model.lattice;
    let ratio = l.lx * l.ly / l.lz;
    if (ratio - ratio.round()).abs() >= 1e-12 {
        return Err(Error::Configuration(format!("twist Lx·y is not a lattice shift: Lx·Ly/Lz = {ratio}")));
    }
    let q = ratio.round() as usize;
    let (hx, hy, hz) = (l.lx / n as f64, l.ly / n as f64, l.lz / n as f64);
    let (wx, wy, base_mass) = sector_weights(model, n);
    let h: Vec<f64> = (0..n * n).map(|a| model.density((a / n) as f64 * hx, (a % n) as f64 * hy)).collect();
    let idx = |i: usize, j: usize, k: usize| (i * n + j) * n + k;
    let mut mass = vec![0.0; n * n * n];
    for a in 0..n * n {
        for k in 0..n {
            mass[a * n + k] = base_mass[a] * (h[a] * h[a]) * hz;
        }
    }
    let modes: Vec<f64> = full3d_modes(n).map(|m| 2.0 * std::f64::consts::PI * m as f64 / l.lz).collect();
    let mut asm = Assembly::new(n * n * n);
    for i in 0..n {
        let x = i as f64 * hx;
        let delta = x * hy;
        // shift[d] = S[k][k − d]: value at z_k of f(· − δ) from plane k − d.
        let shift: Vec<Complex64> = (0..n)
            .map(|d| {
                if i == 0 {
                    return Complex64::new(if d == 0 { 1.0 } else { 0.0 }, 0.0);
                }
                modes.iter().map(|kappa| Complex64::from_polar(1.0, kappa * (d as f64 * hz - delta))).sum::<Complex64>() / n as f64
            })
            .collect();
        for j in 0..n {
            let a2 = i * n + j;
            let bx2 = ((i + 1) % n) * n + j;
            let by2 = i * n + (j + 1) % n;
            let wxa = wx[a2] * hz * (h[a2] * h[bx2]);
            let wya = wy[a2] * hz * (h[a2] * h[by2]);
            let zshift = if i + 1 == n { (q * j) % n } else { 0 };
            for k in 0..n {
                asm.link(idx(i, j, k), idx((i + 1) % n, j, (k + zshift) % n), wxa, Complex64::new(1.0, 0.0));
            }
            if i == 0 {
                for k in 0..n {
                    asm.link(idx(i, j, k), idx(i, (j + 1) % n, k), wya, Complex64::new(1.0, 0.0));
                }
            } else {
                // w Σ_k |(S f_b)_k − f_{a,k}|² with S unitary.
                for k in 0..n {
                    let a = idx(i, j, k);
                    asm.diag[a] += wya;
                    asm.diag[idx(i, (j + 1) % n, k)] += wya;
                    for kp in 0..n {
                        let s = shift[(k + n - kp) % n];
                        let b = idx(i, (j + 1) % n, kp);
                        asm.triplets.push((a, b, -wya * s));
                        asm.triplets.push((b, a, -wya * s.conj()));
                    }
                }
            }
        }
    }
    Ok(Discretization { op: asm.finish(&mass), mass, n_grid: n, sector: None, lattice: l })
}

/// Discrete `Z*Z` on a sector grid, `Z = c_a c_b [∂_z − L_y ∂_x + L_x(∂_y − x∂_z)]`
/// with `L = ln(c_a c_b)`, by centered differences; symmetric form like the
/// builders. On the flat model it is `κ²·I`.
pub fn vertical_energy_operator(model: &ContactModel, m: i64, n_grid: usize) -> Result<SparseOperator> {
    let n = n_grid;
    check_grid(n)?;
    let disc = build_sector(model, m, n)?;
    let kappa = sector_wavenumber(&model.lattice, m)?;
    let l = model.lattice;
    let (hx, hy) = (l.lx / n as f64, l.ly / n as f64);
    let s: Vec<f64> = disc.mass.iter().map(|m| m.sqrt()).collect();
    let mut rows = Vec::with_capacity(n * n);
    for i in 0..n {
        let x = i as f64 * hx;
        for j in 0..n {
            let y = j as f64 * hy;
            let a = i * n + j;
            let f = model.frame_jet(x, y);
            let c = f.a.value * f.b.value;
            let lx = f.a.dx / f.a.value + f.b.dx / f.b.value;
            let ly = f.a.dy / f.a.value + f.b.dy / f.b.value;
            let mut row: Vec<(usize, Complex64)> = Vec::with_capacity(5);
            row.push((a, Complex64::new(0.0, c * kappa)));
            let xp = ((i + 1) % n) * n + j;
            let xm = ((i + n - 1) % n) * n + j;
            let ph_p = if i + 1 == n { Complex64::from_polar(1.0, kappa * l.lx * y) } else { Complex64::new(1.0, 0.0) };
            let ph_m = if i == 0 { Complex64::from_polar(1.0, -kappa * l.lx * y) } else { Complex64::new(1.0, 0.0) };
            row.push((xp, -c * ly / (2.0 * hx) * ph_p));
            row.push((xm, c * ly / (2.0 * hx) * ph_m));
            let yp = i * n + (j + 1) % n;
            let ym = i * n + (j + n - 1) % n;
            row.push((yp, c * lx / (2.0 * hy) * Complex64::from_polar(1.0, -kappa * x * hy)));
            row.push((ym, -c * lx / (2.0 * hy) * Complex64::from_polar(1.0, kappa * x * hy)));
            // B = M^{1/2} G M^{-1/2}.
            let row = row.into_iter().filter(|(_, v)| *v != Complex64::new(0.0, 0.0)).map(|(col, v)| (col, v * (s[a] / s[col]))).collect();
            rows.push(row);
        }
    }
    Ok(SparseOperator::gram(n * n, &rows))
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaugeReport {
    /// `max_i |λ_i(Δ_{h²P}) − λ_i(Δ_P − W)|` over the compared eigenvalues.
    pub max_spectral_deviation: f64,
    /// `max |W|`, `W = (1/h)Δ_P h`.
    pub max_abs_potential: f64,
    /// `max_i |λ_i(Δ_{h²P}) − λ_i(Δ_P)|`, bounded by `max |W|`.
    pub max_density_shift: f64,
    pub compared: usize,
}

fn lowest(op: &SparseOperator, count: usize) -> Result<Vec<f64>> {
    if op.dim() <= DENSE_CAP {
        Ok(dense_eig(op)?.into_iter().take(count).map(|p| p.value).collect())
    } else {
        Ok(lanczos_lowest(op, count, 1e-10, 200 * op.dim().min(5000), 0)?.into_iter().map(|p| p.value).collect())
    }
}

/// Compare `−Δ` for `μ = h²·Popp` with `−Δ_Popp + W` on the same grid.
///
/// With `g = ψ/h` the weighted energy splits as
/// `Σ w h_a h_b |φ g_b − g_a|² = Σ w |φ ψ_b − ψ_a|² − Σ_a |ψ_a|² (K₀h)_a / h_a`,
/// `K₀` the `m = 0` stiffness, so the two matrices agree up to rounding.
pub fn gauge_check(model: &ContactModel, h: &FourierSeries, m: i64, n_grid: usize) -> Result<GaugeReport> {
    let base = ContactModel { density_h: None, ..model.clone() };
    let weighted = base.clone().with_density(h.clone());
    weighted.validate()?;
    let n = n_grid;
    let l = model.lattice;
    let (hx, hy) = (l.lx / n as f64, l.ly / n as f64);
    let a_h = build_sector(&weighted, m, n)?;
    let a_1 = build_sector(&base, m, n)?;
    let (wx, wy, mass) = sector_weights(&base, n);
    let hv: Vec<f64> = (0..n * n).map(|a| h.eval(&l, (a / n) as f64 * hx, (a % n) as f64 * hy)).collect();
    let mut k0h = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let a = i * n + j;
            for (b, w) in [(((i + 1) % n) * n + j, wx[a]), (i * n + (j + 1) % n, wy[a])] {
                k0h[a] += w * (hv[a] - hv[b]);
                k0h[b] += w * (hv[b] - hv[a]);
            }
        }
    }
    let w: Vec<f64> = (0..n * n).map(|a| -k0h[a] / (hv[a] * mass[a])).collect();
    let gauged = a_1.op.add_diagonal(&w);
    let count = 20.min(n * n - 1);
    let lam_h = lowest(&a_h.op, count)?;
    let lam_g = lowest(&gauged, count)?;
    let lam_1 = lowest(&a_1.op, count)?;
    let dev = lam_h.iter().zip(&lam_g).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let shift = lam_h.iter().zip(&lam_1).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(GaugeReport {
        max_spectral_deviation: dev,
        max_abs_potential: w.iter().map(|x| x.abs()).fold(0.0, f64::max),
        max_density_shift: shift,
        compared: count,
    })
}
