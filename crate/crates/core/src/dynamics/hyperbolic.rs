//! Geodesic flow on the unit tangent bundle of the genus-two Bolza surface,
//! the Reeb flow of its contact structure.
//!
//! A state is `g ∈ SL(2, ℝ)`: base point `g·i` in the upper half plane and
//! unit tangent `g_*(i∂_y)`. The flow is `g ↦ g·diag(e^{t/2}, e^{−t/2})`.
//! The surface group is generated by the side pairings of the regular
//! octagon with angles `π/4` centered at `i`: in the disk model
//! `A_k = R_{kπ/4} T R_{−kπ/4}`, `k = 0..3`, with
//! `T = [[1+√2, √(2+2√2)], [√(2+2√2), 1+√2]]` and `R_θ = diag(e^{iθ/2}, e^{−iθ/2})`,
//! moved to the half plane by the Cayley transform. The octagon has inradius
//! `arccosh(1+√2)`, circumradius `arccosh(3+2√2)` and area `4π`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

pub type Mat2 = [[f64; 2]; 2];

/// Guard on generator applications in [`hyperbolic_reduce`].
pub const REDUCTION_GUARD: usize = 1000;

pub fn mul(a: &Mat2, b: &Mat2) -> Mat2 {
    [
        [a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]],
        [a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]],
    ]
}

pub fn det(a: &Mat2) -> f64 {
    a[0][0] * a[1][1] - a[0][1] * a[1][0]
}

fn inverse(a: &Mat2) -> Mat2 {
    [[a[1][1], -a[0][1]], [-a[1][0], a[0][0]]]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HyperbolicState {
    pub matrix: Mat2,
}

impl HyperbolicState {
    pub fn identity() -> Self {
        Self { matrix: [[1.0, 0.0], [0.0, 1.0]] }
    }

    /// Base point `g·i` in the upper half plane.
    pub fn base_point(&self) -> Complex64 {
        let g = &self.matrix;
        let i = Complex64::new(0.0, 1.0);
        (g[0][0] * i + g[0][1]) / (g[1][0] * i + g[1][1])
    }

    /// Base point in the disk model, `w = (z − i)/(z + i)`.
    pub fn disk_point(&self) -> Complex64 {
        let z = self.base_point();
        let i = Complex64::new(0.0, 1.0);
        (z - i) / (z + i)
    }

    /// Hyperbolic distance from the base point to `i`, from
    /// `‖g‖²_F = 2 cosh d`.
    pub fn distance_to_origin(&self) -> f64 {
        let f = frobenius2(&self.matrix);
        (0.5 * f).max(1.0).acosh()
    }

    /// Time-`t` geodesic flow.
    pub fn flow(&self, t: f64) -> Self {
        let (e, f) = ((0.5 * t).exp(), (-0.5 * t).exp());
        let g = &self.matrix;
        Self { matrix: [[g[0][0] * e, g[0][1] * f], [g[1][0] * e, g[1][1] * f]] }
    }

    fn renormalized(mut self) -> Self {
        let s = det(&self.matrix).sqrt();
        for row in &mut self.matrix {
            for v in row {
                *v /= s;
            }
        }
        self
    }
}

fn frobenius2(a: &Mat2) -> f64 {
    a.iter().flatten().map(|v| v * v).sum()
}

/// Inradius `arccosh(1+√2)` of the Bolza octagon.
pub fn bolza_inradius() -> f64 {
    (1.0 + 2f64.sqrt()).acosh()
}

/// Circumradius `arccosh(3+2√2)` of the Bolza octagon.
pub fn bolza_circumradius() -> f64 {
    (3.0 + 2.0 * 2f64.sqrt()).acosh()
}

/// Area `4π` of a genus-two hyperbolic surface.
pub const BOLZA_AREA: f64 = 4.0 * std::f64::consts::PI;

/// The eight side pairings `A_0..A_3` and their inverses in `SL(2, ℝ)`.
pub fn bolza_generators() -> Vec<Mat2> {
    let s2 = 2f64.sqrt();
    let (a, b) = (1.0 + s2, (2.0 + 2.0 * s2).sqrt());
    let c = |re: f64, im: f64| Complex64::new(re, im);
    let i = c(0.0, 1.0);
    // Cayley: disk → half plane is z = i(1 + w)/(1 − w), matrix [[i, i], [−1, 1]].
    let cay = [[i, i], [c(-1.0, 0.0), c(1.0, 0.0)]];
    let cay_inv = [[c(0.5, 0.0) / i, c(-0.5, 0.0)], [c(0.5, 0.0) / i, c(0.5, 0.0)]];
    let cmul = |x: &[[Complex64; 2]; 2], y: &[[Complex64; 2]; 2]| -> [[Complex64; 2]; 2] {
        std::array::from_fn(|r| std::array::from_fn(|k| x[r][0] * y[0][k] + x[r][1] * y[1][k]))
    };
    let mut out = Vec::new();
    for k in 0..4 {
        let th = k as f64 * std::f64::consts::FRAC_PI_4;
        let rot = Complex64::from_polar(1.0, th);
        // R T R^{-1} = [[a, b e^{iθ}], [b e^{−iθ}, a]].
        let disk = [[c(a, 0.0), b * rot], [b * rot.conj(), c(a, 0.0)]];
        let h = cmul(&cmul(&cay, &disk), &cay_inv);
        let m: Mat2 = std::array::from_fn(|r| std::array::from_fn(|k| h[r][k].re));
        debug_assert!(h.iter().flatten().all(|v| v.im.abs() < 1e-12));
        out.push(m);
        out.push(inverse(&m));
    }
    out
}

/// Greedy reduction: apply the generator that most decreases the distance
/// from the base point to `i` until none does. The result lies in the
/// closed Dirichlet domain of the generator set.
pub fn hyperbolic_reduce(state: HyperbolicState, generators: &[Mat2]) -> Result<HyperbolicState> {
    let mut g = state.renormalized();
    for _ in 0..=REDUCTION_GUARD {
        let current = frobenius2(&g.matrix);
        let best = generators
            .iter()
            .map(|a| mul(a, &g.matrix))
            .map(|m| (frobenius2(&m), m))
            .min_by(|x, y| x.0.total_cmp(&y.0));
        match best {
            Some((f, m)) if f < current * (1.0 - 1e-13) => g = HyperbolicState { matrix: m }.renormalized(),
            _ => return Ok(g),
        }
    }
    Err(Error::Precondition(format!("reduction did not terminate within {REDUCTION_GUARD} generator applications")))
}

/// Domain regions used as observables, as functions of the disk point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Region {
    /// Hyperbolic disk of radius `r` around the center (`r` below the
    /// inradius keeps it inside the octagon).
    Disk { radius: f64 },
    /// `Re w > 0`.
    HalfDomain,
}

impl Region {
    pub fn contains(&self, state: &HyperbolicState) -> bool {
        match self {
            Region::Disk { radius } => state.distance_to_origin() < *radius,
            Region::HalfDomain => state.disk_point().re > 0.0,
        }
    }

    /// Normalized Liouville measure: area fraction of the octagon.
    pub fn measure(&self) -> f64 {
        match self {
            Region::Disk { radius } => 2.0 * std::f64::consts::PI * (radius.cosh() - 1.0) / BOLZA_AREA,
            Region::HalfDomain => 0.5,
        }
    }
}

/// A uniformly random start: base point at hyperbolic distance `≤ r` from
/// the center with uniform direction.
pub fn random_state(rng: &mut impl Rng, radius: f64) -> HyperbolicState {
    let r = rng.random_range(0.0..radius);
    let phi = rng.random_range(0.0..std::f64::consts::TAU);
    let psi = rng.random_range(0.0..std::f64::consts::TAU);
    let rot = |t: f64| -> Mat2 { [[(0.5 * t).cos(), (0.5 * t).sin()], [-(0.5 * t).sin(), (0.5 * t).cos()]] };
    let m = mul(&mul(&rot(phi), &HyperbolicState::identity().flow(r).matrix), &rot(psi));
    HyperbolicState { matrix: m }
}

/// Flow for `t_end` with step `dt`, reducing after every step; returns the
/// running averages of the region indicator at `checkpoints` equal times.
pub fn birkhoff_region_average(start: HyperbolicState, region: Region, t_end: f64, dt: f64, checkpoints: usize) -> Result<Vec<(f64, f64)>> {
    if !(dt > 0.0 && t_end > 0.0) || checkpoints == 0 {
        return Err(Error::Domain("need T > 0, dt > 0 and at least one checkpoint".into()));
    }
    let gens = bolza_generators();
    let steps = (t_end / dt).round().max(1.0) as usize;
    let h = t_end / steps as f64;
    let mut g = hyperbolic_reduce(start, &gens)?;
    let mut inside = 0usize;
    let mut out = Vec::with_capacity(checkpoints);
    let mut next = 1;
    for s in 1..=steps {
        g = hyperbolic_reduce(g.flow(h), &gens)?;
        inside += region.contains(&g) as usize;
        while next <= checkpoints && s * checkpoints >= next * steps {
            out.push((s as f64 * h, inside as f64 / s as f64));
            next += 1;
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnsembleReport {
    pub region: Region,
    pub target: f64,
    /// Final average per start, keyed by start index.
    pub averages: Vec<f64>,
    pub mean: f64,
    pub relative_error: f64,
}

/// Birkhoff averages of a region indicator from `starts` seeded random
/// initial states, run in parallel.
pub fn ergodic_ensemble(region: Region, starts: usize, t_end: f64, dt: f64, seed: u64) -> Result<EnsembleReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init: Vec<HyperbolicState> = (0..starts).map(|_| random_state(&mut rng, bolza_inradius())).collect();
    let averages: Vec<Result<f64>> = init.par_iter().map(|s| Ok(birkhoff_region_average(*s, region, t_end, dt, 1)?[0].1)).collect();
    let averages: Vec<f64> = averages.into_iter().collect::<Result<_>>()?;
    let mean = averages.iter().sum::<f64>() / averages.len().max(1) as f64;
    let target = region.measure();
    Ok(EnsembleReport { region, target, mean, relative_error: (mean - target).abs() / target, averages })
}
