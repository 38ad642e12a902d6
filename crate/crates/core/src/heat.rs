//! Heat kernel of the flat Heisenberg group and the Karamata step from the
//! small-time heat trace to the eigenvalue counting function.

use std::io::Write;

use crate::error::{Error, Result};
use crate::exact_heisenberg::linear_fit;
use crate::scalar::{fmt17, KahanSum, Real};

/// Composite Gauss–Legendre rule on `[0, S]` for the even Gaveau integrand.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureSpec<T> {
    pub truncation: T,
    pub panels: usize,
    pub nodes_per_panel: usize,
}

/// Tunables for [`gaveau_kernel_with`].
#[derive(Clone, Copy, Debug)]
pub struct GaveauOptions<T> {
    /// Largest accepted `|z|/t`; beyond it the kernel refuses to evaluate.
    pub max_oscillation: T,
    pub nodes_per_panel: usize,
    pub max_panels: usize,
}

impl<T: Real> Default for GaveauOptions<T> {
    fn default() -> Self {
        Self { max_oscillation: T::lit(400.0), nodes_per_panel: 20, max_panels: 20_000 }
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` by Newton iteration on
/// `P_n`.
pub fn gauss_legendre<T: Real>(n: usize) -> (Vec<T>, Vec<T>) {
    assert!(n >= 1);
    let mut nodes = vec![T::zero(); n];
    let mut weights = vec![T::zero(); n];
    let nf = T::count(n);
    let eps = T::epsilon() * T::lit(4.0);
    for i in 0..n.div_ceil(2) {
        let mut x = (T::PI() * (T::count(i) + T::lit(0.75)) / (nf + T::lit(0.5))).cos();
        let mut dp = T::one();
        for _ in 0..100 {
            let (mut p0, mut p1) = (T::one(), x);
            for k in 2..=n {
                let kf = T::count(k);
                let p2 = ((T::lit(2.0) * kf - T::one()) * x * p1 - (kf - T::one()) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pm = if n == 1 { T::one() } else { p0 };
            dp = nf * (x * pn - pm) / (x * x - T::one());
            let dx = pn / dp;
            x = x - dx;
            if dx.abs() <= eps {
                break;
            }
        }
        if n == 1 {
            dp = T::one();
            x = T::zero();
        }
        let w = T::lit(2.0) / ((T::one() - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn s_over_sinh<T: Real>(s: T) -> T {
    if s.abs() < T::lit(1e-3) {
        let s2 = s * s;
        T::one() - s2 / T::lit(6.0) + T::lit(7.0) * s2 * s2 / T::lit(360.0)
    } else {
        s / s.sinh()
    }
}

fn s_over_tanh<T: Real>(s: T) -> T {
    if s.abs() < T::lit(1e-3) {
        let s2 = s * s;
        T::one() + s2 / T::lit(3.0) - s2 * s2 / T::lit(45.0)
    } else {
        s / s.tanh()
    }
}

impl<T: Real> QuadratureSpec<T> {
    /// Truncation `S` with `4(S+1)e^{−S} < tol` (tail of `∫_ℝ s/sinh s`,
    /// using `s/sinh s ≤ 2s e^{−s}` for `s ≥ 1`), panels at most one unit
    /// wide and at most a quarter period of `cos(zs/t)`.
    pub fn for_tolerance(z_over_t: T, tol: T, options: &GaveauOptions<T>) -> Result<Self> {
        let mut s = T::lit(4.0);
        while T::lit(4.0) * (s + T::one()) * (-s).exp() >= tol {
            s = s + T::one();
            if s > T::lit(700.0) {
                return Err(Error::Resolution(format!("tolerance {tol} too small for truncation")));
            }
        }
        let omega = z_over_t.abs();
        if omega > options.max_oscillation {
            return Err(Error::Resolution(format!(
                "|z|/t = {omega} exceeds the configured bound {}",
                options.max_oscillation
            )));
        }
        let mut width = T::one();
        if omega > T::zero() {
            width = width.min(T::PI() / (T::lit(2.0) * omega));
        }
        let panels = (s / width).ceil().to_usize().unwrap_or(usize::MAX).max(1);
        if panels > options.max_panels {
            return Err(Error::Resolution(format!("{panels} panels needed, limit {}", options.max_panels)));
        }
        Ok(Self { truncation: s, panels, nodes_per_panel: options.nodes_per_panel })
    }
}

/// Heat kernel `H_t((x,y,z),0)` of `X_H² + Y_H²` by quadrature of
///
/// ```text
/// (1/(8π²t²)) ∫_ℝ (s/sinh s) exp(−s(x²+y²)/(4t tanh s)) cos(zs/t) ds.
/// ```
///
/// At the origin the integral is `π²/2`, so `t²H_t(0,0) = 1/16`.
pub fn gaveau_kernel<T: Real>(x: T, y: T, z: T, t: T, tol: T) -> Result<T> {
    gaveau_kernel_with(x, y, z, t, tol, &GaveauOptions::default())
}

pub fn gaveau_kernel_with<T: Real>(x: T, y: T, z: T, t: T, tol: T, options: &GaveauOptions<T>) -> Result<T> {
    if !(t > T::zero()) || !t.is_finite() {
        return Err(Error::Domain(format!("heat kernel needs t > 0, got {t}")));
    }
    if !(tol > T::zero()) {
        return Err(Error::Domain(format!("tolerance must be positive, got {tol}")));
    }
    let omega = z / t;
    let spec = QuadratureSpec::for_tolerance(omega, tol, options)?;
    let r2 = x * x + y * y;
    let four_t = T::lit(4.0) * t;
    let (nodes, weights) = gauss_legendre::<T>(spec.nodes_per_panel);
    let width = spec.truncation / T::count(spec.panels);
    let half = width / T::lit(2.0);
    let mut acc = KahanSum::new();
    for p in 0..spec.panels {
        let mid = width * T::count(p) + half;
        for (xi, wi) in nodes.iter().zip(&weights) {
            let s = mid + half * *xi;
            let f = s_over_sinh(s) * (-(r2 / four_t) * s_over_tanh(s)).exp() * (omega * s).cos();
            acc.add(*wi * half * f);
        }
    }
    let integral = T::lit(2.0) * acc.value();
    Ok(integral / (T::lit(8.0) * T::PI() * T::PI() * t * t))
}

/// `Γ(3) = ∫₀^∞ λ² e^{−λ} dλ = 2`: if `N(λ) ~ Cλ²` then
/// `Σ e^{−λ_n t} = ∫ e^{−λt} dN(λ) ~ C·Γ(3)/t²`.
pub const KARAMATA_GAMMA: f64 = 2.0;

/// Threshold on `r²` below which a Karamata fit carries a warning.
pub const KARAMATA_R2_THRESHOLD: f64 = 0.999;

#[derive(Clone, Debug, PartialEq)]
pub struct KaramataReport {
    /// `c` in `trace(t) ≈ c/t²`.
    pub constant: f64,
    /// `c/Γ(3)`, the implied Weyl constant.
    pub weyl_constant: f64,
    /// `r²` of the fixed-exponent fit in log-log coordinates.
    pub r_squared: f64,
    /// Free least-squares exponent `p` in `trace ≈ c t^{−p}`.
    pub free_exponent: f64,
    pub t_lo: f64,
    pub t_hi: f64,
    pub warning: Option<String>,
}

/// Fit `trace(t) ≈ c/t²` on a geometric grid of `points` values in
/// `[t_lo, t_hi]`.
///
/// `log c` is the mean of `log(t²·trace)`; `r²` measures how much of the
/// variance of `log trace` the slope `−2` explains, so a trace growing like
/// `t^{−3/2}` scores `1 − (1/4)/(9/4) ≈ 0.89`.
pub fn karamata_constant<T, F>(trace_fn: F, t_lo: T, t_hi: T, points: usize) -> Result<KaramataReport>
where
    T: Real,
    F: Fn(T) -> Result<T>,
{
    if !(t_lo > T::zero()) || !(t_lo < t_hi) {
        return Err(Error::Domain(format!("need 0 < t_lo < t_hi, got [{t_lo}, {t_hi}]")));
    }
    if points < 3 {
        return Err(Error::Domain("karamata fit needs at least 3 points".into()));
    }
    let (a, b) = (t_lo.ln(), t_hi.ln());
    let mut log_t = Vec::with_capacity(points);
    let mut log_tr = Vec::with_capacity(points);
    for i in 0..points {
        let t = (a + (b - a) * T::count(i) / T::count(points - 1)).exp();
        let tr = trace_fn(t)?;
        if !(tr > T::zero()) {
            return Err(Error::Domain(format!("trace must be positive, got {tr} at t={t}")));
        }
        log_t.push(t.to_f64_lossy().ln());
        log_tr.push(tr.to_f64_lossy().ln());
    }
    let n = points as f64;
    let log_c = log_t.iter().zip(&log_tr).map(|(lt, ly)| ly + 2.0 * lt).sum::<f64>() / n;
    let mean = log_tr.iter().sum::<f64>() / n;
    let ss_tot: f64 = log_tr.iter().map(|y| (y - mean).powi(2)).sum();
    let ss_res: f64 = log_t.iter().zip(&log_tr).map(|(lt, ly)| (ly - log_c + 2.0 * lt).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    let (slope, _, _) = linear_fit(&log_t, &log_tr);
    let constant = log_c.exp();
    let warning = (r_squared < KARAMATA_R2_THRESHOLD)
        .then(|| format!("poor 1/t^2 fit: r^2 = {r_squared:.6}, free exponent {:.4}", -slope));
    Ok(KaramataReport {
        constant,
        weyl_constant: constant / KARAMATA_GAMMA,
        r_squared,
        free_exponent: -slope,
        t_lo: t_lo.to_f64_lossy(),
        t_hi: t_hi.to_f64_lossy(),
        warning,
    })
}

/// Trace curve rows `(t, trace, t²·trace)` as CSV.
pub fn write_trace_csv<W: Write>(mut w: W, rows: &[(f64, f64)]) -> std::io::Result<()> {
    writeln!(w, "t,trace,t2_trace")?;
    for &(t, tr) in rows {
        writeln!(w, "{},{},{}", fmt17(t), fmt17(tr), fmt17(t * t * tr))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_rule_integrates_polynomials() {
        let (x, w) = gauss_legendre::<f64>(10);
        let sum_w: f64 = w.iter().sum();
        assert!((sum_w - 2.0).abs() < 1e-14);
        let x18: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(18)).sum();
        assert!((x18 - 2.0 / 19.0).abs() < 1e-14);
        let (x1, w1) = gauss_legendre::<f64>(1);
        assert_eq!((x1[0], w1[0]), (0.0, 2.0));
    }

    #[test]
    fn kernel_at_origin() {
        for t in [1.0f64, 0.1, 0.01] {
            let v = gaveau_kernel(0.0, 0.0, 0.0, t, 1e-12).unwrap();
            assert!((v * t * t - 0.0625).abs() < 1e-10, "t={t} v={v}");
        }
    }

    #[test]
    fn kernel_positive_off_origin() {
        assert!(gaveau_kernel(1.0, 1.0, 0.0, 0.5, 1e-10).unwrap() > 0.0);
        assert!(gaveau_kernel(0.3, 0.0, 0.7, 0.5, 1e-10).unwrap() > 0.0);
    }

    #[test]
    fn kernel_refuses_fast_oscillation() {
        assert!(matches!(gaveau_kernel(0.0, 0.0, 10.0, 1e-3, 1e-10), Err(Error::Resolution(_))));
        assert!(gaveau_kernel(0.0, 0.0, 0.0, -1.0, 1e-10).is_err());
    }

    #[test]
    fn single_precision_kernel() {
        let v = gaveau_kernel(0.0f32, 0.0, 0.0, 1.0, 1e-6).unwrap();
        assert!((v - 0.0625).abs() < 1e-6);
    }

    #[test]
    fn karamata_exact_power() {
        let r = karamata_constant(|t: f64| Ok(3.0 / (t * t)), 1e-4, 1e-2, 16).unwrap();
        assert!((r.constant - 3.0).abs() < 1e-12);
        assert!(r.warning.is_none());
        assert!((r.free_exponent - 2.0).abs() < 1e-12);
    }

    #[test]
    fn karamata_rejects_riemannian_rate() {
        let r = karamata_constant(|t: f64| Ok(5.0 / t.powf(1.5)), 1e-4, 1e-2, 16).unwrap();
        assert!(r.r_squared < KARAMATA_R2_THRESHOLD);
        assert!((r.r_squared - 8.0 / 9.0).abs() < 1e-9);
        assert!(r.warning.is_some());
    }
}
