use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;
use srqe::discretize::{build_torus_sector, vertical_energy_operator};
use srqe::eigensolve::{count_below, dense_eig, EigenPair};
use srqe::exact_heisenberg::{enumerate_spectrum, FLAT_WEYL_CONSTANT};
use srqe::model::ContactModel;
use srqe::weyl_qe::*;

fn sector_pairs(model: &ContactModel, m: i64, n: usize) -> (srqe::discretize::Discretization, Vec<EigenPair>) {
    let d = sector_discretization(model, m, n).unwrap();
    let p = dense_eig(&d.op).unwrap();
    (d, p)
}

#[test]
fn flat_exact_weyl_fit() {
    let s = enumerate_spectrum(2000.0).unwrap();
    let f = weyl_fit(&s, 200.0, 2000.0).unwrap();
    assert!((f.exponent - 2.0).abs() < 0.02, "{f:?}");
    assert!((f.constant / (PI * PI / 8.0) - 1.0).abs() < 0.02, "{f:?}");
    assert!((FLAT_WEYL_CONSTANT - PI * PI / 8.0).abs() < 1e-15);
    assert!(weyl_fit(&s, 200.0, 2500.0).is_err());
}

proptest! {
    #[test]
    fn power_law_recovered(c in 0.1f64..10.0, p in 0.5f64..3.0) {
        let f = weyl_fit(&CountingFn { f: move |l: f64| c * l.powf(p), lambda_max: 1e3 }, 1.0, 1e3).unwrap();
        prop_assert!((f.constant - c).abs() < 1e-9 * c);
        prop_assert!((f.exponent - p).abs() < 1e-9);
        prop_assert!(f.r_squared > 1.0 - 1e-12);
    }

    #[test]
    fn cesaro_of_shifted_series(shift in -5.0f64..5.0, scale in 0.1f64..3.0) {
        let s = MatrixElementSeries::new("s", (1..200).map(|i| (i as f64, (i as f64).sin())).collect()).unwrap();
        let t = s.map("t", |v| scale * v + shift);
        let (a, b) = (s.cesaro_mean(150.0).unwrap(), t.cesaro_mean(150.0).unwrap());
        prop_assert!((b - (scale * a + shift)).abs() < 1e-12);
        prop_assert!((t.variance(150.0, shift).unwrap() - scale * scale * s.variance(150.0, 0.0).unwrap()).abs() < 1e-12);
    }
}

#[test]
fn inertia_counts_match_assembled_eigenvalues() {
    let model = ContactModel::reference_perturbation(0.1);
    let cut = [6.0, 9.0, 12.0];
    let grid = assemble_sector_counts(&model, &cut, 12).unwrap();
    let opts = AssemblyOptions { n_grid: 12, tol: 1e-10, ..AssemblyOptions::default() };
    let spec = assemble_sector_spectrum(&model, 12.0, &opts).unwrap();
    for &l in &cut {
        assert_eq!(grid.count(l).unwrap(), spec.count(l).unwrap(), "N({l})");
    }
    assert!(grid.count(7.0).is_err());
    assert_eq!(grid.lambda_max(), 12.0);
}

#[test]
fn count_below_matches_dense() {
    let model = ContactModel::reference_perturbation(0.2);
    let d = sector_discretization(&model, 3, 12).unwrap();
    let values: Vec<f64> = dense_eig(&d.op).unwrap().into_iter().map(|p| p.value).collect();
    let perm = d.band_ordering();
    for lambda in [0.5, 2.9, 7.3, 15.0, 40.0] {
        let want = values.iter().filter(|v| **v < lambda).count();
        assert_eq!(count_below(&d.op, lambda, Some(&perm)).unwrap(), want);
        assert_eq!(count_below(&d.op, lambda, None).unwrap(), want);
    }
}

#[test]
fn concentration_cesaro_increases_toward_one() {
    let s = enumerate_spectrum(1e4).unwrap();
    let c = MatrixElementSeries::concentration(&s);
    let means: Vec<f64> = [1e2, 1e3, 1e4].iter().map(|l| c.cesaro_mean(*l).unwrap()).collect();
    assert!(means.windows(2).all(|w| w[0] < w[1]), "{means:?}");
    assert!(means[2] >= 0.9 && means[2] <= 1.0, "{means:?}");
    // the series agrees with the spectrum's own Cesàro mean
    assert!((means[2] - s.concentration_mean(1e4).unwrap()).abs() < 1e-12);
}

#[test]
fn variance_about_one_decreases() {
    let s = enumerate_spectrum(4000.0).unwrap();
    let c = MatrixElementSeries::concentration(&s);
    let deficit = c.map("deficit", |v| 1.0 - v);
    let lambdas = [250.0, 500.0, 1000.0, 2000.0, 4000.0];
    let v: Vec<f64> = lambdas.iter().map(|l| c.variance(*l, 1.0).unwrap()).collect();
    assert!(v.windows(2).all(|w| w[1] < w[0]), "{v:?}");
    let d: Vec<f64> = lambdas.iter().map(|l| deficit.variance(*l, 0.0).unwrap()).collect();
    for (a, b) in v.iter().zip(&d) {
        assert!((a - b).abs() < 1e-12);
    }
    // torus elements alone stay at distance one
    let torus = MatrixElementSeries::from_exact("torus", &s, |d| if is_torus(d) { 0.0 } else { 1.0 });
    assert!(torus.variance(4000.0, 1.0).unwrap() > 0.0);
    let torus_only = MatrixElementSeries::weighted(
        "torus only",
        s.data().iter().filter(|d| is_torus(d)).map(|d| (d.eigenvalue, d.concentration_element(), d.multiplicity)).collect(),
    )
    .unwrap();
    assert_eq!(torus_only.variance(4000.0, 1.0).unwrap(), 1.0);
}

#[test]
fn torus_fraction_decays_like_inverse_lambda() {
    let s = enumerate_spectrum(1e4).unwrap();
    let slope = torus_fraction_slope(&s, 1e2, 1e4).unwrap();
    assert!((slope + 1.0).abs() < 0.15, "{slope}");
}

#[test]
fn kvn_on_squares() {
    let n = 10_000usize;
    let u: Vec<f64> = (0..n)
        .map(|i| {
            let r = (i as f64).sqrt().round() as usize;
            if r * r == i { 1.0 } else { 0.0 }
        })
        .collect();
    let set = kvn_extract(&u).unwrap();
    assert!(set.density_estimate >= 0.99, "{}", set.density_estimate);
    let t1 = set.levels[0];
    assert!((t1..n).all(|i| !set.kept[i] || u[i] == 0.0));
    for (i, (v, k)) in u.iter().zip(&set.kept).enumerate() {
        if *k {
            assert!(*v < set.threshold(i));
        }
    }
}

#[test]
fn kvn_on_harmonic_sequence() {
    let n = 100_000usize;
    let u: Vec<f64> = (0..n).map(|i| 1.0 / (i + 1) as f64).collect();
    let set = kvn_extract(&u).unwrap();
    assert!(set.density_estimate > 0.99);
    assert!(set.levels.windows(2).all(|w| w[0] <= w[1]));
    let tail_max = |a: usize, b: usize| (a..b).filter(|i| set.kept[*i]).map(|i| u[i]).fold(0.0, f64::max);
    assert!(tail_max(n / 2, n) < tail_max(n / 20, n / 10));
}

#[test]
fn kvn_drops_torus_elements_of_deficit_series() {
    let s = enumerate_spectrum(600.0).unwrap();
    let data: Vec<(f64, bool)> = s
        .data()
        .iter()
        .flat_map(|d| std::iter::repeat_n((1.0 - d.concentration_element(), is_torus(d)), d.multiplicity as usize))
        .collect();
    let values: Vec<f64> = data.iter().map(|d| d.0).collect();
    let set = kvn_extract(&values).unwrap();
    let ambient = data.iter().filter(|d| d.1).count() as f64 / data.len() as f64;
    let kept: Vec<bool> = data.iter().zip(&set.kept).filter(|(_, k)| **k).map(|(d, _)| d.1).collect();
    let kept_fraction = kept.iter().filter(|t| **t).count() as f64 / kept.len() as f64;
    assert!(kept_fraction < 0.1 * ambient, "{kept_fraction} vs {ambient}");
    assert!(set.density_estimate > 0.5);
}

#[test]
fn opposite_sectors_give_equal_local_series() {
    let model = ContactModel::reference_perturbation(0.2);
    let l = model.lattice;
    let f = move |x: f64, y: f64| (2.0 * PI * x / l.lx).cos() + 0.5 * (2.0 * PI * y / l.ly).sin();
    let (dp, pp) = sector_pairs(&model, 3, 12);
    let (dm, pm) = sector_pairs(&model, -3, 12);
    let a = local_weyl_series("+", &dp, &pp, f).unwrap();
    let b = local_weyl_series("-", &dm, &pm, f).unwrap();
    for (x, y) in a.entries().iter().zip(b.entries()) {
        assert!((x.0 - y.0).abs() < 1e-10);
    }
    for lambda in [5.0, 20.0, 80.0] {
        assert!((a.cesaro_mean(lambda).unwrap() - b.cesaro_mean(lambda).unwrap()).abs() < 1e-9);
    }
}

#[test]
fn local_weyl_variance_bounded_by_square_mean() {
    let model = ContactModel::reference_perturbation(0.1);
    let l = model.lattice;
    let f = move |x: f64, y: f64| (2.0 * PI * x / l.lx).cos() * (2.0 * PI * y / l.ly).cos() + 0.3;
    let (d, p) = sector_pairs(&model, 2, 12);
    let a = local_weyl_series("f", &d, &p, f).unwrap();
    let a2 = local_weyl_series("f2", &d, &p, move |x, y| f(x, y).powi(2)).unwrap();
    for lambda in [4.0, 10.0, 40.0, 200.0] {
        assert!(a.variance(lambda, 0.0).unwrap() <= a2.cesaro_mean(lambda).unwrap() + 1e-12);
    }
}

#[test]
fn local_weyl_mean_of_oscillation_vanishes() {
    let model = ContactModel::flat();
    let l = model.lattice;
    let (n, cutoff) = (24, 10.5);
    let mut entries = Vec::new();
    for m in 0..=sector_bound(&model, cutoff) {
        let (d, p) = sector_pairs(&model, m, n);
        let below: Vec<EigenPair> = p.into_iter().filter(|p| p.value <= cutoff).collect();
        let s = local_weyl_series("cos", &d, &below, |x, _| (2.0 * PI * x / l.lx).cos()).unwrap();
        let copies = if m == 0 { 1 } else { 2 };
        entries.extend(s.entries().iter().map(|e| (e.0, e.1, copies)));
    }
    entries.sort_by(|a, b| a.0.total_cmp(&b.0));
    let series = MatrixElementSeries::weighted("cos", entries).unwrap();
    let mean = series.cesaro_mean(cutoff).unwrap();
    assert!(mean.abs() < 0.05, "{mean}");
}

#[test]
fn classification_of_landau_and_torus_states() {
    let flat = ContactModel::flat();
    let (d, p) = sector_pairs(&flat, 5, 24);
    let vertical = vertical_energy_operator(&flat, 5, 24).unwrap();
    let c = quantum_limit_classify(&p[0].vector, &vertical, &d.op).unwrap();
    assert!(c.sigma_fraction >= 0.8, "{c:?}");
    assert!(!c.degenerate);

    let d = build_torus_sector(&flat, 24).unwrap();
    let p = dense_eig(&d.op).unwrap();
    let vertical = vertical_energy_operator(&flat, 0, 24).unwrap();
    for pair in &p[1..5] {
        let c = quantum_limit_classify(&pair.vector, &vertical, &d.op).unwrap();
        assert!(c.sigma_fraction <= 0.05, "{c:?}");
    }

    let d = build_torus_sector(&flat, 16).unwrap();
    let vertical = vertical_energy_operator(&flat, 0, 16).unwrap();
    let constant: Vec<Complex64> = d.mass.iter().map(|m| Complex64::new(m.sqrt(), 0.0)).collect();
    let c = quantum_limit_classify(&constant, &vertical, &d.op).unwrap();
    assert!(c.degenerate);
    assert_eq!(c.sigma_fraction, 0.0);
}

#[test]
fn series_csv_roundtrip() {
    let s = MatrixElementSeries::new("x", vec![(1.0, 0.25), (2.0, 0.5)]).unwrap();
    let mut buf = Vec::new();
    s.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let rows: Vec<Vec<f64>> = text.lines().skip(1).map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows, vec![vec![1.0, 0.25, 1.0], vec![2.0, 0.5, 1.0]]);
}
