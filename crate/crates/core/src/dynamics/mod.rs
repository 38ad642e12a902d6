//! Sub-Riemannian geodesic and Reeb flows on contact models, the adiabatic
//! invariant near the characteristic cone, and Birkhoff averages.
//!
//! Phase points live on `T*M` in the coordinates `(x, y, z, p_x, p_y, p_z)`.
//! With `c = c_a c_b` the momenta of the frame are
//!
//! * `h_X = c_a p_x`, `h_Y = c_b (p_y − x p_z)`,
//! * `h_Z = c p_z − c_y p_x + c_x (p_y − x p_z)`,
//!
//! the last one being the momentum of the Reeb field
//! `Z = (−c_y, c_x, c − x c_x) = c[∂z − L_y ∂x + L_x(∂y − x∂z)]`, `L = ln c`,
//! characterized by `α_g(Z) = 1` and `ι_Z dα_g = 0` for `α_g = (dz + x dy)/c`.
//! Geodesics are the integral curves of the Hamiltonian field of
//! `g* = h_X² + h_Y²`.
//!
//! Orientation: on the flat model Hamilton's equations give
//! `ḣ_X = 2h_Z h_Y`, `ḣ_Y = −2h_Z h_X`, so `h_X + i h_Y` turns clockwise at
//! rate `2h_Z` and the projection to `(x, y)` runs around a circle of radius
//! `√g*/|h_Z|` in the same sense.

pub mod hyperbolic;

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact_heisenberg::linear_fit;
use crate::model::{ContactModel, Lattice};
use crate::scalar::fmt17;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PhasePoint {
    pub q: [f64; 3],
    pub p: [f64; 3],
}

impl PhasePoint {
    pub fn new(q: [f64; 3], p: [f64; 3]) -> Self {
        Self { q, p }
    }

    fn to_state(self) -> [f64; 6] {
        [self.q[0], self.q[1], self.q[2], self.p[0], self.p[1], self.p[2]]
    }

    fn from_state(s: [f64; 6]) -> Self {
        Self { q: [s[0], s[1], s[2]], p: [s[3], s[4], s[5]] }
    }

    /// Image under the lattice element sending `x ↦ x + a L_x`,
    /// `y ↦ y + b L_y`, `z ↦ z + c L_z − a L_x y`, chosen to bring the base
    /// point into `[0, L_x) × [0, L_y) × [0, L_z)`. Momenta transform by the
    /// inverse transpose, so every `h_•` is unchanged.
    pub fn reduced(self, lattice: &Lattice) -> Self {
        let [x, y, z] = self.q;
        let a = -(x / lattice.lx).floor();
        let b = -(y / lattice.ly).floor();
        let (dx, dy) = (a * lattice.lx, b * lattice.ly);
        let z1 = z - dx * y;
        let z2 = z1 - (z1 / lattice.lz).floor() * lattice.lz;
        Self { q: [x + dx, y + dy, z2], p: [self.p[0], self.p[1] + dx * self.p[2], self.p[2]] }
    }
}

/// Frame momenta at a phase point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Momenta {
    pub h_x: f64,
    pub h_y: f64,
    pub h_z: f64,
}

/// `c = c_a c_b` with first and second derivatives.
struct ProductJet {
    c: f64,
    cx: f64,
    cy: f64,
    cxx: f64,
    cxy: f64,
    cyy: f64,
}

fn product_jet(model: &ContactModel, x: f64, y: f64) -> ProductJet {
    let f = model.frame_jet(x, y);
    let (a, b) = (f.a, f.b);
    ProductJet {
        c: a.value * b.value,
        cx: a.dx * b.value + a.value * b.dx,
        cy: a.dy * b.value + a.value * b.dy,
        cxx: a.dxx * b.value + 2.0 * a.dx * b.dx + a.value * b.dxx,
        cxy: a.dxy * b.value + a.dx * b.dy + a.dy * b.dx + a.value * b.dxy,
        cyy: a.dyy * b.value + 2.0 * a.dy * b.dy + a.value * b.dyy,
    }
}

pub fn momenta(model: &ContactModel, pt: &PhasePoint) -> Momenta {
    let [x, y, _] = pt.q;
    let [px, py, pz] = pt.p;
    let pp = py - x * pz;
    let c = product_jet(model, x, y);
    Momenta { h_x: model.ca(x, y) * px, h_y: model.cb(x, y) * pp, h_z: c.c * pz - c.cy * px + c.cx * pp }
}

/// Sub-Riemannian Hamiltonian `g* = h_X² + h_Y²`.
pub fn g_star(model: &ContactModel, pt: &PhasePoint) -> f64 {
    let h = momenta(model, pt);
    h.h_x * h.h_x + h.h_y * h.h_y
}

/// Threshold on `|h_Z|` below which the adiabatic invariant is undefined.
pub const H_Z_FLOOR: f64 = 1e-10;

/// Adiabatic invariant `I = (h_X² + h_Y²)/|h_Z|`, `None` when `|h_Z|` is
/// below [`H_Z_FLOOR`].
pub fn adiabatic_invariant(model: &ContactModel, pt: &PhasePoint) -> Option<f64> {
    let h = momenta(model, pt);
    (h.h_z.abs() >= H_Z_FLOOR).then(|| (h.h_x * h.h_x + h.h_y * h.h_y) / h.h_z.abs())
}

/// Radius `√g*/|h_Z|` of the projected circle of a flat-model geodesic.
pub fn spiral_radius(model: &ContactModel, pt: &PhasePoint) -> f64 {
    g_star(model, pt).sqrt() / momenta(model, pt).h_z.abs()
}

/// Hamiltonian vector field of `g*` as `(q̇, ṗ)`.
pub fn geodesic_vector_field(model: &ContactModel, pt: &PhasePoint) -> [f64; 6] {
    let [x, y, _] = pt.q;
    let [px, py, pz] = pt.p;
    let f = model.frame_jet(x, y);
    let (a, b) = (f.a, f.b);
    let pp = py - x * pz;
    let hx = a.value * px;
    let hy = b.value * pp;
    let dgdx = 2.0 * hx * a.dx * px + 2.0 * hy * (b.dx * pp - b.value * pz);
    let dgdy = 2.0 * hx * a.dy * px + 2.0 * hy * b.dy * pp;
    [2.0 * hx * a.value, 2.0 * hy * b.value, -2.0 * hy * b.value * x, -dgdx, -dgdy, 0.0]
}

/// Hamiltonian vector field of `h_Z`; its projection to `M` is `Z`.
pub fn reeb_vector_field(model: &ContactModel, pt: &PhasePoint) -> [f64; 6] {
    let [x, y, _] = pt.q;
    let [px, py, pz] = pt.p;
    let c = product_jet(model, x, y);
    let pp = py - x * pz;
    let dhdx = -c.cxy * px + c.cxx * pp;
    let dhdy = c.cy * pz - c.cyy * px + c.cxy * pp;
    [-c.cy, c.cx, c.c - x * c.cx, -dhdx, -dhdy, 0.0]
}

/// Reeb field `Z(q)` and its Jacobian `∂Z/∂q`.
pub fn reeb_field_jacobian(model: &ContactModel, q: [f64; 3]) -> ([f64; 3], [[f64; 3]; 3]) {
    let x = q[0];
    let c = product_jet(model, x, q[1]);
    (
        [-c.cy, c.cx, c.c - x * c.cx],
        [[-c.cxy, -c.cyy, 0.0], [c.cxx, c.cxy, 0.0], [-x * c.cxx, c.cy - x * c.cxy, 0.0]],
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Flow {
    Geodesic,
    Reeb,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Rk4,
    ImplicitMidpoint,
}

/// Default bound on `T/dt`.
pub const DEFAULT_STEP_CAP: usize = 10_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct IntegrateOptions {
    pub scheme: Scheme,
    pub step_cap: usize,
    /// Keep every `sample_every`-th step (the final state is always kept).
    pub sample_every: usize,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        Self { scheme: Scheme::Rk4, step_cap: DEFAULT_STEP_CAP, sample_every: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrajectorySample {
    pub times: Vec<f64>,
    pub states: Vec<PhasePoint>,
    /// `(g*, I)` per sample, `I` undefined when `|h_Z|` is tiny.
    pub invariants: Vec<(f64, Option<f64>)>,
}

impl TrajectorySample {
    pub fn last(&self) -> &PhasePoint {
        self.states.last().expect("trajectories are never empty")
    }

    /// CSV export: `t,x,y,z,p_x,p_y,p_z,gstar,I` (empty `I` when undefined).
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,x,y,z,p_x,p_y,p_z,gstar,I")?;
        for ((t, s), (g, i)) in self.times.iter().zip(&self.states).zip(&self.invariants) {
            let i = i.map(fmt17).unwrap_or_default();
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                fmt17(*t),
                fmt17(s.q[0]),
                fmt17(s.q[1]),
                fmt17(s.q[2]),
                fmt17(s.p[0]),
                fmt17(s.p[1]),
                fmt17(s.p[2]),
                fmt17(*g),
                i
            )?;
        }
        Ok(())
    }
}

fn add_scaled(a: &[f64; 6], k: &[f64; 6], s: f64) -> [f64; 6] {
    std::array::from_fn(|i| a[i] + s * k[i])
}

fn rk4_step(field: &impl Fn(&[f64; 6]) -> [f64; 6], y: &[f64; 6], dt: f64) -> [f64; 6] {
    let k1 = field(y);
    let k2 = field(&add_scaled(y, &k1, 0.5 * dt));
    let k3 = field(&add_scaled(y, &k2, 0.5 * dt));
    let k4 = field(&add_scaled(y, &k3, dt));
    std::array::from_fn(|i| y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
}

/// Fixed-point iterations allowed per implicit-midpoint step.
pub const MIDPOINT_MAX_ITER: usize = 50;

fn midpoint_step(field: &impl Fn(&[f64; 6]) -> [f64; 6], y: &[f64; 6], dt: f64) -> Result<[f64; 6]> {
    let mut next = rk4_step(field, y, dt);
    for _ in 0..MIDPOINT_MAX_ITER {
        let mid: [f64; 6] = std::array::from_fn(|i| 0.5 * (y[i] + next[i]));
        let f = field(&mid);
        let cand = add_scaled(y, &f, dt);
        let diff = cand.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let scale = cand.iter().map(|a| a.abs()).fold(1.0, f64::max);
        next = cand;
        if diff <= 1e-15 * scale {
            return Ok(next);
        }
    }
    Err(Error::NoConvergence {
        iterations: MIDPOINT_MAX_ITER,
        wanted: 1,
        converged: 0,
        best_values: next.to_vec(),
        best_residuals: Vec::new(),
    })
}

/// Integrate a flow from `start` over `[0, t_end]` with fixed step `dt`
/// (the last step is shortened to land on `t_end`).
pub fn integrate(model: &ContactModel, flow: Flow, start: PhasePoint, t_end: f64, dt: f64, options: &IntegrateOptions) -> Result<TrajectorySample> {
    if !(dt > 0.0) || !(t_end >= 0.0) {
        return Err(Error::Domain(format!("need dt > 0 and T ≥ 0, got dt={dt}, T={t_end}")));
    }
    let steps = (t_end / dt - 1e-9).ceil().max(0.0);
    if steps > options.step_cap as f64 {
        return Err(Error::Resource(format!("T/dt = {steps} exceeds the step cap {}", options.step_cap)));
    }
    let steps = steps as usize;
    let field = |s: &[f64; 6]| {
        let pt = PhasePoint::from_state(*s);
        match flow {
            Flow::Geodesic => geodesic_vector_field(model, &pt),
            Flow::Reeb => reeb_vector_field(model, &pt),
        }
    };
    let every = options.sample_every.max(1);
    let record = |out: &mut TrajectorySample, t: f64, pt: PhasePoint| {
        out.times.push(t);
        out.invariants.push((g_star(model, &pt), adiabatic_invariant(model, &pt)));
        out.states.push(pt);
    };
    let mut out = TrajectorySample { times: Vec::new(), states: Vec::new(), invariants: Vec::new() };
    let mut y = start.to_state();
    record(&mut out, 0.0, start);
    for i in 0..steps {
        let t0 = i as f64 * dt;
        let h = if i + 1 == steps { t_end - t0 } else { dt };
        y = match options.scheme {
            Scheme::Rk4 => rk4_step(&field, &y, h),
            Scheme::ImplicitMidpoint => midpoint_step(&field, &y, h)?,
        };
        if (i + 1) % every == 0 || i + 1 == steps {
            record(&mut out, if i + 1 == steps { t_end } else { t0 + h }, PhasePoint::from_state(y));
        }
    }
    Ok(out)
}

/// Popp-measure Jacobian `det(Dφ_T)·ρ(φ_T(q))/ρ(q)` of the time-`T` Reeb
/// flow on `M`, from the variational equations integrated with RK4.
pub fn reeb_volume_jacobian(model: &ContactModel, q: [f64; 3], t_end: f64, dt: f64) -> Result<f64> {
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("dt must be positive, got {dt}")));
    }
    // State: position followed by the 3×3 matrix Dφ in row-major order.
    let field = |s: &[f64; 12]| -> [f64; 12] {
        let (z, j) = reeb_field_jacobian(model, [s[0], s[1], s[2]]);
        let mut out = [0.0; 12];
        out[..3].copy_from_slice(&z);
        for r in 0..3 {
            for c in 0..3 {
                out[3 + 3 * r + c] = (0..3).map(|k| j[r][k] * s[3 + 3 * k + c]).sum();
            }
        }
        out
    };
    let mut s = [0.0; 12];
    s[..3].copy_from_slice(&q);
    s[3] = 1.0;
    s[7] = 1.0;
    s[11] = 1.0;
    let steps = (t_end / dt).ceil().max(1.0) as usize;
    let h = t_end / steps as f64;
    let axpy = |a: &[f64; 12], k: &[f64; 12], c: f64| -> [f64; 12] { std::array::from_fn(|i| a[i] + c * k[i]) };
    for _ in 0..steps {
        let k1 = field(&s);
        let k2 = field(&axpy(&s, &k1, 0.5 * h));
        let k3 = field(&axpy(&s, &k2, 0.5 * h));
        let k4 = field(&axpy(&s, &k3, h));
        s = std::array::from_fn(|i| s[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
    }
    let m = |r: usize, c: usize| s[3 + 3 * r + c];
    let det = m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1)) - m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0))
        + m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0));
    Ok(det * model.popp_density(s[0], s[1]) / model.popp_density(q[0], q[1]))
}

/// Phase point over `q` with prescribed `(h_X, h_Y, h_Z)`.
pub fn point_with_momenta(model: &ContactModel, q: [f64; 3], h: Momenta) -> PhasePoint {
    let [x, y, _] = q;
    let c = product_jet(model, x, y);
    let px = h.h_x / model.ca(x, y);
    let pp = h.h_y / model.cb(x, y);
    let pz = (h.h_z + c.cy * px - c.cx * pp) / c.c;
    PhasePoint { q, p: [px, pp + x * pz, pz] }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AdiabaticRow {
    pub epsilon: f64,
    pub i0: f64,
    pub horizon: f64,
    /// `sup_t |I(t) − I₀|` over every start.
    pub sup_deviation: f64,
    /// Some trajectory had `|h_Z − h_Z(0)| > 0.5|h_Z(0)|` or an undefined `I`.
    pub left_chart: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AdiabaticReport {
    pub rows: Vec<AdiabaticRow>,
    /// Fitted slope of `log sup|I − I₀|` against `log ε` over `ε > 0`.
    pub slope: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdiabaticOptions {
    /// `I₀ = i0_scale·ε`, or `i0_scale` itself when `ε = 0`.
    pub i0_scale: f64,
    pub starts: usize,
    pub dt: f64,
    pub scheme: Scheme,
    /// Horizon used for `ε = 0`.
    pub flat_horizon: f64,
}

impl Default for AdiabaticOptions {
    fn default() -> Self {
        Self { i0_scale: 1.0, starts: 8, dt: 1e-3, scheme: Scheme::Rk4, flat_horizon: 10.0 }
    }
}

/// Deterministic start points: base points on a diagonal of the cell and
/// momentum angles spread around the circle, all with `h_Z = 1`, `I = I₀`.
pub fn adiabatic_starts(model: &ContactModel, i0: f64, count: usize) -> Vec<PhasePoint> {
    let l = model.lattice;
    (0..count)
        .map(|k| {
            let s = (k as f64 + 0.5) / count as f64;
            let theta = 2.0 * std::f64::consts::PI * (0.37 + 0.61 * k as f64);
            let r = i0.sqrt();
            point_with_momenta(model, [s * l.lx, (0.3 + 0.7 * s) * l.ly, 0.0], Momenta { h_x: r * theta.cos(), h_y: r * theta.sin(), h_z: 1.0 })
        })
        .collect()
}

/// For each `ε`, integrate the geodesic flow of `model_for(ε)` to `T = 1/ε`
/// from [`adiabatic_starts`] and record `sup|I(t) − I₀|`.
pub fn adiabatic_experiment(model_for: impl Fn(f64) -> ContactModel + Sync, epsilons: &[f64], options: &AdiabaticOptions) -> Result<AdiabaticReport> {
    let mut rows = Vec::new();
    for &eps in epsilons {
        if !(eps >= 0.0) {
            return Err(Error::Domain(format!("epsilon must be nonnegative, got {eps}")));
        }
        let model = model_for(eps);
        model.validate()?;
        let i0 = if eps > 0.0 { options.i0_scale * eps } else { options.i0_scale };
        let horizon = if eps > 0.0 { 1.0 / eps } else { options.flat_horizon };
        let starts = adiabatic_starts(&model, i0, options.starts);
        let opts = IntegrateOptions { scheme: options.scheme, ..Default::default() };
        let results: Vec<Result<(f64, bool)>> = starts
            .par_iter()
            .map(|s| {
                let traj = integrate(&model, Flow::Geodesic, *s, horizon, options.dt, &opts)?;
                let hz0 = momenta(&model, s).h_z;
                let mut dev: f64 = 0.0;
                let mut left = false;
                for (pt, (_, i)) in traj.states.iter().zip(&traj.invariants) {
                    let hz = momenta(&model, pt).h_z;
                    left |= (hz - hz0).abs() > 0.5 * hz0.abs();
                    match i {
                        Some(i) => dev = dev.max((i - i0).abs()),
                        None => left = true,
                    }
                }
                Ok((dev, left))
            })
            .collect();
        let mut sup: f64 = 0.0;
        let mut left_chart = false;
        for r in results {
            let (d, l) = r?;
            sup = sup.max(d);
            left_chart |= l;
        }
        rows.push(AdiabaticRow { epsilon: eps, i0, horizon, sup_deviation: sup, left_chart });
    }
    let fit: Vec<&AdiabaticRow> = rows.iter().filter(|r| r.epsilon > 0.0 && r.sup_deviation > 0.0).collect();
    let slope = (fit.len() >= 2).then(|| {
        let xs: Vec<f64> = fit.iter().map(|r| r.epsilon.ln()).collect();
        let ys: Vec<f64> = fit.iter().map(|r| r.sup_deviation.ln()).collect();
        linear_fit(&xs, &ys).0
    });
    Ok(AdiabaticReport { rows, slope })
}

/// Running time averages `(1/t)∫₀ᵗ f` of an observable along a trajectory
/// (trapezoid rule on the samples) at `checkpoints` equally spaced times.
pub fn birkhoff_average(traj: &TrajectorySample, observable: impl Fn(&PhasePoint) -> f64, checkpoints: usize) -> Result<Vec<(f64, f64)>> {
    if traj.times.len() < 2 || checkpoints == 0 {
        return Err(Error::Domain("need at least two samples and one checkpoint".into()));
    }
    let t_end = *traj.times.last().unwrap();
    let marks: Vec<f64> = (1..=checkpoints).map(|k| t_end * k as f64 / checkpoints as f64).collect();
    let mut out = Vec::with_capacity(checkpoints);
    let mut integral = 0.0;
    let mut prev = observable(&traj.states[0]);
    let mut next_mark = 0;
    for i in 1..traj.times.len() {
        let cur = observable(&traj.states[i]);
        integral += 0.5 * (prev + cur) * (traj.times[i] - traj.times[i - 1]);
        prev = cur;
        while next_mark < marks.len() && traj.times[i] >= marks[next_mark] * (1.0 - 1e-12) {
            out.push((traj.times[i], integral / traj.times[i]));
            next_mark += 1;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_momenta() {
        let m = ContactModel::flat();
        let pt = PhasePoint::new([0.5, 0.0, 0.0], [1.0, 2.0, 3.0]);
        let h = momenta(&m, &pt);
        assert_eq!((h.h_x, h.h_y, h.h_z), (1.0, 0.5, 3.0));
    }

    #[test]
    fn point_with_momenta_roundtrip() {
        let m = ContactModel::reference_perturbation(0.2);
        let want = Momenta { h_x: 0.3, h_y: -0.7, h_z: 1.0 };
        let pt = point_with_momenta(&m, [0.4, 1.1, 0.2], want);
        let got = momenta(&m, &pt);
        assert!((got.h_x - want.h_x).abs() < 1e-14);
        assert!((got.h_y - want.h_y).abs() < 1e-14);
        assert!((got.h_z - want.h_z).abs() < 1e-14);
    }

    #[test]
    fn reduction_keeps_momenta() {
        let m = ContactModel::reference_perturbation(0.2);
        let pt = PhasePoint::new([7.3, -4.1, 30.0], [0.2, -0.4, 0.9]);
        let r = pt.reduced(&m.lattice);
        assert!((0.0..m.lattice.lx).contains(&r.q[0]));
        assert!((0.0..m.lattice.ly).contains(&r.q[1]));
        assert!((0.0..m.lattice.lz).contains(&r.q[2]));
        let (a, b) = (momenta(&m, &pt), momenta(&m, &r));
        assert!((a.h_x - b.h_x).abs() < 1e-12 && (a.h_y - b.h_y).abs() < 1e-12 && (a.h_z - b.h_z).abs() < 1e-12);
    }
}
