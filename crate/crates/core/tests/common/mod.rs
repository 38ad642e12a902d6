#![allow(dead_code)]

use num_rational::BigRational;
use rand::Rng;
use srqe::dynamics::PhasePoint;
use srqe::normal_form::{circle_average, GradedSymbol, HomPoly, Space};

pub type Q = BigRational;

pub fn q(n: i64, d: i64) -> Q {
    Q::new(n.into(), d.into())
}

fn random_poly<R: Rng>(rng: &mut R, k: u32) -> HomPoly<Q> {
    HomPoly::from_coeffs((0..=k).map(|_| q(rng.random_range(-5..=5), rng.random_range(1..=4))).collect())
}

/// Random element of `F_{j,k}` restricted to one space, with `t`-degree ≤ 2.
pub fn random_element<R: Rng>(rng: &mut R, j: i64, k: u32, space: Space) -> GradedSymbol<Q> {
    let mut out = GradedSymbol::zero(None);
    for a in 0..=2u32 {
        if rng.random_bool(0.3) {
            continue;
        }
        let p = random_poly(rng, k);
        let p = match space {
            Space::Zero => p.sub(&circle_average(&p)),
            Space::Invariant => circle_average(&p),
        };
        out = out.add(&GradedSymbol::block(j, a, &p, None));
    }
    out
}

/// Random `F_{j,k}` element without a space restriction.
pub fn random_full<R: Rng>(rng: &mut R, j: i64, k: u32) -> GradedSymbol<Q> {
    let mut out = GradedSymbol::zero(None);
    for a in 0..=2u32 {
        out = out.add(&GradedSymbol::block(j, a, &random_poly(rng, k), None));
    }
    out
}

/// Closed-form flat geodesic: `w = h_X + i h_Y` rotates as `w₀e^{−iωt}`,
/// `ω = 2p_z`; `x + iy = ξ₀ + (2iw₀/ω)(e^{−iωt} − 1)`; `ż = −2x h_Y`.
pub fn flat_exact(start: &PhasePoint, t: f64) -> PhasePoint {
    let [x0, y0, z0] = start.q;
    let [px, py, pz] = start.p;
    let (hx, hy) = (px, py - x0 * pz);
    let om = 2.0 * pz;
    let (r, phi) = (hx.hypot(hy), hy.atan2(hx));
    // A = 2i w₀/ω = (2r/ω) e^{i(φ + π/2)}
    let (amod, psi) = (2.0 * r / om, phi + std::f64::consts::FRAC_PI_2);
    let (cre, cim) = (x0 - amod * psi.cos(), y0 - amod * psi.sin());
    let x = cre + amod * (psi - om * t).cos();
    let y = cim + amod * (psi - om * t).sin();
    let hy_t = r * (phi - om * t).sin();
    let hx_t = r * (phi - om * t).cos();
    // ∫ h_Y x dt with h_Y = r sin(φ − ωt), x = cre + amod cos(ψ − ωt)
    let i1 = ((phi - om * t).cos() - phi.cos()) / om;
    let i2 = 0.5 * ((phi + psi - 2.0 * om * t).cos() - (phi + psi).cos()) / (2.0 * om) + 0.5 * (phi - psi).sin() * t;
    let z = z0 - 2.0 * r * (cre * i1 + amod * i2);
    PhasePoint::new([x, y, z], [hx_t, hy_t + x * pz, pz])
}

pub fn dist(a: &PhasePoint, b: &PhasePoint) -> f64 {
    a.q.iter().chain(&a.p).zip(b.q.iter().chain(&b.p)).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
