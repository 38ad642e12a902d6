//! Contact models on the Heisenberg quotient: frame coefficients, Popp
//! density, optional smooth density.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Periods of the lattice `Γ`: `x, y ∈ √(2π)ℤ`, `z ∈ 2πℤ` by default.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lattice {
    pub lx: f64,
    pub ly: f64,
    pub lz: f64,
}

impl Default for Lattice {
    fn default() -> Self {
        let r = (2.0 * std::f64::consts::PI).sqrt();
        Self { lx: r, ly: r, lz: 2.0 * std::f64::consts::PI }
    }
}

impl Lattice {
    pub fn cell_volume(&self) -> f64 {
        self.lx * self.ly * self.lz
    }
}

/// One term `cos·cos θ + sin·sin θ` with `θ = 2π(kx·x/Lx + ky·y/Ly)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourierTerm {
    pub kx: i32,
    pub ky: i32,
    #[serde(default)]
    pub cos: f64,
    #[serde(default)]
    pub sin: f64,
}

/// Truncated Fourier series on the `(x, y)` torus.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourierSeries {
    #[serde(default)]
    pub constant: f64,
    #[serde(default)]
    pub terms: Vec<FourierTerm>,
}

/// Value, gradient and Hessian `(f_xx, f_xy, f_yy)` at a point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub dx: f64,
    pub dy: f64,
    pub dxx: f64,
    pub dxy: f64,
    pub dyy: f64,
}

impl FourierSeries {
    pub fn constant(c: f64) -> Self {
        Self { constant: c, terms: Vec::new() }
    }

    pub fn cosine(kx: i32, ky: i32, amplitude: f64) -> Self {
        Self { constant: 0.0, terms: vec![FourierTerm { kx, ky, cos: amplitude, sin: 0.0 }] }
    }

    pub fn sine(kx: i32, ky: i32, amplitude: f64) -> Self {
        Self { constant: 0.0, terms: vec![FourierTerm { kx, ky, cos: 0.0, sin: amplitude }] }
    }

    /// `cos(2πx/Lx)·cos(2πy/Ly)` written as two plane waves.
    pub fn cos_cos() -> Self {
        Self {
            constant: 0.0,
            terms: vec![FourierTerm { kx: 1, ky: 1, cos: 0.5, sin: 0.0 }, FourierTerm { kx: 1, ky: -1, cos: 0.5, sin: 0.0 }],
        }
    }

    pub fn plus(mut self, other: &FourierSeries) -> Self {
        self.constant += other.constant;
        self.terms.extend_from_slice(&other.terms);
        self
    }

    pub fn is_zero(&self) -> bool {
        self.constant == 0.0 && self.terms.iter().all(|t| t.cos == 0.0 && t.sin == 0.0)
    }

    pub fn eval(&self, lattice: &Lattice, x: f64, y: f64) -> f64 {
        let tau = 2.0 * std::f64::consts::PI;
        self.constant
            + self
                .terms
                .iter()
                .map(|t| {
                    let th = tau * (t.kx as f64 * x / lattice.lx + t.ky as f64 * y / lattice.ly);
                    t.cos * th.cos() + t.sin * th.sin()
                })
                .sum::<f64>()
    }

    pub fn jet(&self, lattice: &Lattice, x: f64, y: f64) -> Jet {
        let tau = 2.0 * std::f64::consts::PI;
        let mut j = Jet { value: self.constant, ..Jet::default() };
        for t in &self.terms {
            let (wx, wy) = (tau * t.kx as f64 / lattice.lx, tau * t.ky as f64 / lattice.ly);
            let th = wx * x + wy * y;
            let (s, c) = th.sin_cos();
            let f = t.cos * c + t.sin * s;
            let df = -t.cos * s + t.sin * c;
            j.value += f;
            j.dx += wx * df;
            j.dy += wy * df;
            j.dxx -= wx * wx * f;
            j.dxy -= wx * wy * f;
            j.dyy -= wy * wy * f;
        }
        j
    }
}

/// Frame `X = (1+εa)∂x`, `Y = (1+εb)(∂y − x∂z)` on `Γ\G`, with an optional
/// density `μ = h²·Popp`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContactModel {
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default)]
    pub coeff_a: FourierSeries,
    #[serde(default)]
    pub coeff_b: FourierSeries,
    #[serde(default)]
    pub lattice: Lattice,
    #[serde(default)]
    pub density_h: Option<FourierSeries>,
}

impl Default for ContactModel {
    fn default() -> Self {
        Self::flat()
    }
}

/// Frame factors and their first and second derivatives at a point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameJet {
    pub a: Jet,
    pub b: Jet,
}

impl ContactModel {
    pub fn flat() -> Self {
        Self {
            epsilon: 0.0,
            coeff_a: FourierSeries::default(),
            coeff_b: FourierSeries::default(),
            lattice: Lattice::default(),
            density_h: None,
        }
    }

    /// `a = cos(2πx/Lx)cos(2πy/Ly)`, `b = sin(2πy/Ly)`.
    pub fn reference_perturbation(epsilon: f64) -> Self {
        Self { epsilon, coeff_a: FourierSeries::cos_cos(), coeff_b: FourierSeries::sine(0, 1, 1.0), ..Self::flat() }
    }

    pub fn with_density(mut self, h: FourierSeries) -> Self {
        self.density_h = Some(h);
        self
    }

    pub fn is_flat(&self) -> bool {
        (self.epsilon == 0.0 || (self.coeff_a.is_zero() && self.coeff_b.is_zero())) && self.density_h.is_none()
    }

    /// `1 + εa`.
    pub fn ca(&self, x: f64, y: f64) -> f64 {
        1.0 + self.epsilon * self.coeff_a.eval(&self.lattice, x, y)
    }

    /// `1 + εb`.
    pub fn cb(&self, x: f64, y: f64) -> f64 {
        1.0 + self.epsilon * self.coeff_b.eval(&self.lattice, x, y)
    }

    /// Jets of `1 + εa` and `1 + εb`.
    pub fn frame_jet(&self, x: f64, y: f64) -> FrameJet {
        let scale = |j: Jet| Jet {
            value: 1.0 + self.epsilon * j.value,
            dx: self.epsilon * j.dx,
            dy: self.epsilon * j.dy,
            dxx: self.epsilon * j.dxx,
            dxy: self.epsilon * j.dxy,
            dyy: self.epsilon * j.dyy,
        };
        FrameJet { a: scale(self.coeff_a.jet(&self.lattice, x, y)), b: scale(self.coeff_b.jet(&self.lattice, x, y)) }
    }

    /// Popp density `(c_a c_b)^{-2}` relative to `dx dy dz`.
    ///
    /// `[X, Y] = −c_a c_b ∂z mod D`, so the normalized contact form is
    /// `α_g = α_H/(c_a c_b)` with `α_H = dz + x dy`, and on `D`
    /// `α_g ∧ dα_g = (c_a c_b)^{-2} α_H ∧ dα_H = (c_a c_b)^{-2} dx dy dz`.
    pub fn popp_density(&self, x: f64, y: f64) -> f64 {
        let c = self.ca(x, y) * self.cb(x, y);
        1.0 / (c * c)
    }

    /// Density factor `h` (one when absent).
    pub fn density(&self, x: f64, y: f64) -> f64 {
        self.density_h.as_ref().map_or(1.0, |h| h.eval(&self.lattice, x, y))
    }

    /// Check `1 + εa > 0`, `1 + εb > 0` and `h > 0` on a 64×64 sample grid.
    pub fn validate(&self) -> Result<()> {
        let l = self.lattice;
        if !(l.lx > 0.0 && l.ly > 0.0 && l.lz > 0.0) {
            return Err(Error::Configuration(format!("lattice periods must be positive, got {l:?}")));
        }
        let n = 64;
        for i in 0..n {
            for j in 0..n {
                let (x, y) = (l.lx * i as f64 / n as f64, l.ly * j as f64 / n as f64);
                let (a, b) = (self.ca(x, y), self.cb(x, y));
                if !(a > 0.0 && b > 0.0) {
                    return Err(Error::ModelInvariant(format!("frame factor not positive at ({x:.4}, {y:.4}): {a}, {b}")));
                }
                if !(self.density(x, y) > 0.0) {
                    return Err(Error::Domain(format!("density h not positive at ({x:.4}, {y:.4})")));
                }
            }
        }
        Ok(())
    }

    /// `(div_μ X, div_μ Y)` for `μ = h²·Popp`, from the analytic jets:
    /// `div_μ X = ∂x(ρ c_a)/ρ`, `div_μ Y = ∂y(ρ c_b)/ρ` with `ρ = h²(c_a c_b)^{-2}`
    /// (the `−x∂z` part of `Y` is divergence free because `ρ` does not depend
    /// on `z`).
    pub fn divergence(&self, x: f64, y: f64) -> (f64, f64) {
        let f = self.frame_jet(x, y);
        let h = self.density_h.as_ref().map_or(Jet { value: 1.0, ..Jet::default() }, |h| h.jet(&self.lattice, x, y));
        // ∂ log ρ = 2∂h/h − 2∂c_a/c_a − 2∂c_b/c_b.
        let lx = 2.0 * h.dx / h.value - 2.0 * f.a.dx / f.a.value - 2.0 * f.b.dx / f.b.value;
        let ly = 2.0 * h.dy / h.value - 2.0 * f.a.dy / f.a.value - 2.0 * f.b.dy / f.b.value;
        (f.a.dx + f.a.value * lx, f.b.dy + f.b.value * ly)
    }
}
