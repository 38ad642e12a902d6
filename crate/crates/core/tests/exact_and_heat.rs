use std::f64::consts::PI;

use proptest::prelude::*;
use srqe::exact_heisenberg::*;
use srqe::heat::*;
use srqe::{Spectrum, SpectrumF32};

#[test]
fn single_and_double_precision_counts_agree() {
    let a: Spectrum = enumerate_spectrum(300.0).unwrap();
    let b: SpectrumF32 = enumerate_spectrum(300.0f32).unwrap();
    for l in [3.5, 10.0, 57.0, 299.0] {
        assert_eq!(a.counting(l).unwrap(), b.counting(l as f32).unwrap());
    }
    assert_eq!(a.counting(3.5).unwrap(), 15);
}

#[test]
fn heat_trace_matches_spectrum_sum() {
    let s: Spectrum = enumerate_spectrum(4000.0).unwrap();
    for t in [0.05, 0.2, 1.0] {
        let direct: f64 = s.data().iter().map(|d| d.multiplicity as f64 * (-d.eigenvalue * t).exp()).sum();
        let closed = heat_trace_closed_form(t, 1e-14).unwrap();
        // tail beyond 4000 is below e^{-200}·N
        assert!((direct - closed).abs() < 1e-9 * closed, "t={t}: {direct} vs {closed}");
    }
}

#[test]
fn karamata_matches_weyl_constant() {
    let k = karamata_constant(|t: f64| heat_trace_closed_form(t, 1e-14), 1e-4, 1e-3, 16).unwrap();
    assert!((k.weyl_constant - PI * PI / 8.0).abs() < 1e-3);
    assert!(k.warning.is_none());
    let k = karamata_constant(|t: f32| heat_trace_closed_form(t, 1e-6), 1e-3, 1e-2, 8).unwrap();
    assert!((k.weyl_constant - PI * PI / 8.0).abs() < 0.02);
}

#[test]
fn gaveau_single_precision_tracks_double() {
    for (x, y, z, t) in [(0.0, 0.0, 0.0, 1.0), (0.3, -0.2, 0.1, 0.5), (1.0, 0.0, 0.5, 2.0)] {
        let d = gaveau_kernel(x, y, z, t, 1e-12).unwrap();
        let f = gaveau_kernel(x as f32, y as f32, z as f32, t as f32, 1e-6).unwrap();
        assert!((d - f as f64).abs() < 1e-5 * d.abs().max(1e-3), "{d} vs {f}");
    }
}

proptest! {
    #[test]
    fn kernel_scaling(x in -1.0f64..1.0, y in -1.0f64..1.0, z in -0.5f64..0.5, t in 0.3f64..2.0, lam in 0.5f64..2.0) {
        // p_{λ²t}(λx, λy, λ²z) = λ^{-4} p_t(x, y, z)
        let a = gaveau_kernel(x, y, z, t, 1e-12).unwrap();
        let b = gaveau_kernel(lam * x, lam * y, lam * lam * z, lam * lam * t, 1e-12).unwrap();
        prop_assert!((b * lam.powi(4) - a).abs() < 1e-8 * a.abs().max(1e-6));
    }

    #[test]
    fn counting_is_monotone(a in 1.0f64..500.0, b in 1.0f64..500.0) {
        let s: Spectrum = enumerate_spectrum(500.0).unwrap();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(s.counting(lo).unwrap() <= s.counting(hi).unwrap());
    }
}
