use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use srqe::dynamics::hyperbolic::*;
use srqe::dynamics::*;
use srqe::model::ContactModel;

mod common;
use common::{dist, flat_exact};

fn random_point(rng: &mut ChaCha8Rng) -> PhasePoint {
    PhasePoint::new(
        [rng.random_range(0.0..2.5), rng.random_range(0.0..2.5), rng.random_range(0.0..6.0)],
        [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
    )
}

#[test]
fn oracle_satisfies_hamilton_equations() {
    let flat = ContactModel::flat();
    let s = PhasePoint::new([0.3, -0.2, 0.1], [0.7, 0.4, 1.3]);
    let h = 1e-5;
    for t in [0.0, 0.37, 2.0] {
        let (a, b) = (flat_exact(&s, t + h), flat_exact(&s, t - h));
        let f = geodesic_vector_field(&flat, &flat_exact(&s, t));
        let d = [a.q[0] - b.q[0], a.q[1] - b.q[1], a.q[2] - b.q[2], a.p[0] - b.p[0], a.p[1] - b.p[1], a.p[2] - b.p[2]];
        for i in 0..6 {
            assert!((d[i] / (2.0 * h) - f[i]).abs() < 1e-7, "t={t} i={i}");
        }
    }
}

#[test]
fn flat_fields_at_simple_points() {
    let flat = ContactModel::flat();
    assert_eq!(geodesic_vector_field(&flat, &PhasePoint::new([0.0; 3], [0.0, 0.0, 1.0])), [0.0; 6]);
    assert_eq!(geodesic_vector_field(&flat, &PhasePoint::new([0.0; 3], [1.0, 0.0, 0.0])), [2.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
}

#[test]
fn fields_match_finite_differences() {
    let model = ContactModel::reference_perturbation(0.3);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let h = 1e-3;
    // fourth-order centered difference
    let diff = |f: &dyn Fn(f64) -> f64| (8.0 * (f(h) - f(-h)) - (f(2.0 * h) - f(-2.0 * h))) / (12.0 * h);
    for _ in 0..100 {
        let pt = random_point(&mut rng);
        let gf = geodesic_vector_field(&model, &pt);
        let rf = reeb_vector_field(&model, &pt);
        for i in 0..6 {
            let shift = |s: f64| {
                let mut p = pt;
                if i < 3 { p.q[i] += s } else { p.p[i - 3] += s }
                p
            };
            let dg = diff(&|s| g_star(&model, &shift(s)));
            let dz = diff(&|s| momenta(&model, &shift(s)).h_z);
            // (q̇, ṗ) = (∂H/∂p, −∂H/∂q)
            let (wg, wz) = if i < 3 { (-gf[i + 3], -rf[i + 3]) } else { (gf[i - 3], rf[i - 3]) };
            assert!((dg - wg).abs() < 1e-8, "g* component {i}: {dg} vs {wg}");
            assert!((dz - wz).abs() < 1e-8, "h_Z component {i}: {dz} vs {wz}");
        }
    }
}

#[test]
fn reeb_field_normalizes_contact_form() {
    let model = ContactModel::reference_perturbation(0.3);
    let c = |x: f64, y: f64| model.ca(x, y) * model.cb(x, y);
    // α_g = (dz + x dy)/c as a covector field
    let alpha = |q: [f64; 3]| [0.0, q[0] / c(q[0], q[1]), 1.0 / c(q[0], q[1])];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let h = 1e-5;
    for _ in 0..50 {
        let q = [rng.random_range(0.0..2.5), rng.random_range(0.0..2.5), 0.0];
        let (z, jac) = reeb_field_jacobian(&model, q);
        let a = alpha(q);
        assert!((a.iter().zip(&z).map(|(a, z)| a * z).sum::<f64>() - 1.0).abs() < 1e-13);
        // dα(Z, ∂_i) = Z^j ∂_j α_i + α_j ∂_i Z^j
        for i in 0..3 {
            let mut v = 0.0;
            for j in 0..3 {
                let (mut qp, mut qm) = (q, q);
                qp[j] += h;
                qm[j] -= h;
                v += z[j] * (alpha(qp)[i] - alpha(qm)[i]) / (2.0 * h);
                v += a[j] * jac[j][i];
            }
            assert!(v.abs() < 1e-8, "component {i}: {v}");
        }
        for j in 0..3 {
            let (mut qp, mut qm) = (q, q);
            qp[j] += h;
            qm[j] -= h;
            let (zp, zm) = (reeb_field_jacobian(&model, qp).0, reeb_field_jacobian(&model, qm).0);
            for i in 0..3 {
                assert!(((zp[i] - zm[i]) / (2.0 * h) - jac[i][j]).abs() < 1e-8);
            }
        }
    }
}

#[test]
fn flat_reeb_is_translation() {
    let flat = ContactModel::flat();
    let start = PhasePoint::new([0.0; 3], [0.3, -0.2, 1.0]);
    let t = 10.0;
    let tr = integrate(&flat, Flow::Reeb, start, t, 1e-2, &IntegrateOptions::default()).unwrap();
    let end = tr.last().reduced(&flat.lattice);
    assert!(end.q[0].abs() < 1e-12 && end.q[1].abs() < 1e-12);
    assert!((end.q[2] - t % (2.0 * std::f64::consts::PI)).abs() < 1e-12);
    assert_eq!(end.p, start.p);
}

#[test]
fn rk4_against_closed_form() {
    let flat = ContactModel::flat();
    let start = PhasePoint::new([0.1, 0.2, 0.3], [0.8, -0.5, 1.1]);
    let exact = flat_exact(&start, 10.0);
    let run = |dt: f64| dist(integrate(&flat, Flow::Geodesic, start, 10.0, dt, &IntegrateOptions::default()).unwrap().last(), &exact);
    assert!(run(1e-3) < 1e-6);
    let (e1, e2) = (run(0.02), run(0.01));
    let order = (e1 / e2).log2();
    assert!((order - 4.0).abs() < 0.3, "order {order}");
}

#[test]
fn flat_spiral_radius_and_orientation() {
    let flat = ContactModel::flat();
    let start = PhasePoint::new([0.0; 3], [0.6, 0.8, 2.0]);
    let r = spiral_radius(&flat, &start);
    assert!((r - 0.5).abs() < 1e-15);
    let tr = integrate(&flat, Flow::Geodesic, start, 5.0, 1e-3, &IntegrateOptions { sample_every: 50, ..Default::default() }).unwrap();
    // center ξ₀ − 2i w₀/ω
    let (w0, om) = ((0.6f64, 0.8f64), 4.0);
    let (cx, cy) = (2.0 * w0.1 / om, -2.0 * w0.0 / om);
    let mut winding = 0.0;
    let mut prev = (0.0 - cx).atan2(0.0 - cy);
    for s in &tr.states {
        assert!(((s.q[0] - cx).hypot(s.q[1] - cy) - r).abs() < 1e-6);
        let ang = (s.q[1] - cy).atan2(s.q[0] - cx);
        let mut d = ang - prev;
        if d > std::f64::consts::PI { d -= std::f64::consts::TAU }
        if d < -std::f64::consts::PI { d += std::f64::consts::TAU }
        winding += d;
        prev = ang;
        let h = momenta(&flat, s);
        assert!((h.h_x.hypot(h.h_y) - 1.0).abs() < 1e-9);
    }
    // clockwise for h_Z > 0
    assert!(winding < 0.0);
}

#[test]
fn midpoint_conserves_energy_and_vertical_momentum() {
    let flat = ContactModel::flat();
    let opts = IntegrateOptions { scheme: Scheme::ImplicitMidpoint, ..Default::default() };
    let start = PhasePoint::new([0.2, 0.1, 0.0], [0.5, 0.3, 1.7]);
    let t = 20.0;
    let tr = integrate(&flat, Flow::Geodesic, start, t, 1e-2, &opts).unwrap();
    let g0 = g_star(&flat, &start);
    let hz0 = momenta(&flat, &start).h_z;
    for s in &tr.states {
        assert!((g_star(&flat, s) - g0).abs() < 1e-8 * t);
        assert!((momenta(&flat, s).h_z - hz0).abs() < 1e-10);
    }
    let pert = ContactModel::reference_perturbation(0.1);
    let tr = integrate(&pert, Flow::Geodesic, start, t, 1e-3, &opts).unwrap();
    let g0 = g_star(&pert, &start);
    assert!(tr.invariants.iter().all(|(g, _)| (g - g0).abs() < 1e-6 * g0));
}

#[test]
fn reeb_flow_preserves_popp_volume() {
    let model = ContactModel::reference_perturbation(0.2);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..10 {
        let q = [rng.random_range(0.0..2.5), rng.random_range(0.0..2.5), rng.random_range(0.0..6.0)];
        let j = reeb_volume_jacobian(&model, q, 5.0, 1e-3).unwrap();
        assert!((j - 1.0).abs() < 1e-6, "{j}");
    }
    assert_eq!(reeb_volume_jacobian(&ContactModel::flat(), [0.1, 0.2, 0.3], 3.0, 0.1).unwrap(), 1.0);
}

#[test]
fn adiabatic_invariant_symmetries() {
    let model = ContactModel::reference_perturbation(0.2);
    let flat = ContactModel::flat();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let pt = random_point(&mut rng);
        let lam = rng.random_range(0.1..10.0);
        let scaled = PhasePoint::new(pt.q, pt.p.map(|p| lam * p));
        if let (Some(a), Some(b)) = (adiabatic_invariant(&model, &pt), adiabatic_invariant(&model, &scaled)) {
            assert!((b - lam * a).abs() < 1e-10 * (1.0 + b.abs()));
        }
        let neg = PhasePoint::new(pt.q, pt.p.map(|p| -p));
        assert_eq!(adiabatic_invariant(&flat, &pt), adiabatic_invariant(&flat, &neg));
    }
    assert_eq!(adiabatic_invariant(&flat, &PhasePoint::new([0.0; 3], [1.0, 0.0, 0.0])), None);
}

#[test]
fn flat_adiabatic_invariant_is_exact() {
    let opts = AdiabaticOptions { starts: 3, i0_scale: 0.1, flat_horizon: 10.0, ..Default::default() };
    let r = adiabatic_experiment(|_| ContactModel::flat(), &[0.0], &opts).unwrap();
    assert!(r.rows[0].sup_deviation < 1e-9);
    assert!(!r.rows[0].left_chart);
    assert_eq!(r.slope, None);
}

#[test]
fn birkhoff_flat_reeb_is_not_ergodic() {
    let flat = ContactModel::flat();
    let start = PhasePoint::new([0.7, 0.2, 0.0], [0.0, 0.0, 1.0]);
    let tr = integrate(&flat, Flow::Reeb, start, 200.0, 0.05, &IntegrateOptions::default()).unwrap();
    let avg = birkhoff_average(&tr, |p| p.q[0].cos(), 10).unwrap();
    assert_eq!(avg.len(), 10);
    assert!(avg.iter().all(|(_, a)| (a - 0.7f64.cos()).abs() < 1e-10));
    let avg = birkhoff_average(&tr, |p| p.q[2].cos(), 10).unwrap();
    assert!(avg.last().unwrap().1.abs() < 1e-2);
    let avg = birkhoff_average(&tr, |_| 2.5, 4).unwrap();
    assert!(avg.iter().all(|(_, a)| (a - 2.5).abs() < 1e-12));
}

#[test]
fn hyperbolic_reduction() {
    let gens = bolza_generators();
    let id = HyperbolicState::identity();
    assert_eq!(hyperbolic_reduce(id, &gens).unwrap(), id);
    for g in &gens {
        let r = hyperbolic_reduce(HyperbolicState { matrix: *g }, &gens).unwrap();
        assert!(r.distance_to_origin() < 1e-6);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let mut s = random_state(&mut rng, 1.0);
        for _ in 0..100 {
            s = hyperbolic_reduce(s.flow(0.5), &gens).unwrap();
        }
        assert!((det(&s.matrix) - 1.0).abs() < 1e-12);
        assert!(s.distance_to_origin() <= bolza_circumradius() + 1e-9);
        // Dirichlet condition against every generator
        for g in &gens {
            assert!(HyperbolicState { matrix: mul(g, &s.matrix) }.distance_to_origin() >= s.distance_to_origin() - 1e-9);
        }
    }
    let slow = [[(-0.0025f64).exp(), 0.0], [0.0, 0.0025f64.exp()]];
    assert!(hyperbolic_reduce(id.flow(20.0), &[slow]).is_err());
}

#[test]
fn hyperbolic_region_measures() {
    assert!((Region::Disk { radius: 1.2 }.measure() - 0.5 * (1.2f64.cosh() - 1.0)).abs() < 1e-15);
    assert!(bolza_inradius() > 1.2);
    let r = ergodic_ensemble(Region::HalfDomain, 10, 200.0, 0.01, 4).unwrap();
    assert_eq!(r.averages.len(), 10);
    assert!(r.relative_error < 0.1, "{r:?}");
}
