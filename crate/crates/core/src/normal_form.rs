//! Graded symbol algebra on the model cone and the Birkhoff normal form.
//!
//! Symbols are finite sums of terms `c · t^a · s^γ · u^p v^q`. A term of
//! `(u,v)`-degree `k = p + q` has grade `(j, k)` with `γ = j − k/2`, so
//! `F_{j,k}` collects the degree-`k` terms carrying `s^{j−k/2}`.
//!
//! The base of the cone is reduced to one canonical pair `(t, s)` with
//! `{s, t} = 1`. The base bracket is `{a, b} = ∂_s a ∂_t b − ∂_t a ∂_s b`, so
//! `{s, b} = ∂_t b`, and the fibre bracket on `(u, v)` has `{u, v} = 1`:
//!
//! ```text
//! {aP, bQ} = {a, b}·PQ + ab·(∂_u P ∂_v Q − ∂_v P ∂_u Q)
//! ```
//!
//! With `H₂ = s(u² + v²)` this gives `{H₂, bQ} = ∂_t b·(u²+v²)Q + 2sb·AQ`,
//! `A = u∂_v − v∂_u`, which is all the cohomological solvers need.
//!
//! Truncation is by `(u,v)`-degree `k`: a symbol truncated at `K` stores only
//! grades with `k ≤ K`. Brackets never lower `k` by more than two and every
//! grading identity below is stated in `k`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_rational::BigRational;

use crate::error::{Error, Result};
use crate::scalar::Coefficient;

/// Homogeneous polynomial of degree `k` in `(u, v)`, coefficients on the
/// basis `u^{k−i} v^i`, `i = 0..=k`.
#[derive(Clone, Debug, PartialEq)]
pub struct HomPoly<C> {
    degree: u32,
    coeffs: Vec<C>,
}

impl<C: Coefficient> HomPoly<C> {
    pub fn zero(degree: u32) -> Self {
        Self { degree, coeffs: vec![C::zero(); degree as usize + 1] }
    }

    pub fn from_coeffs(coeffs: Vec<C>) -> Self {
        assert!(!coeffs.is_empty(), "a homogeneous polynomial has at least one coefficient");
        Self { degree: coeffs.len() as u32 - 1, coeffs }
    }

    /// `u^{k−i} v^i` with coefficient one.
    pub fn monomial(degree: u32, i: u32) -> Self {
        let mut p = Self::zero(degree);
        p.coeffs[i as usize] = C::one();
        p
    }

    /// `(u² + v²)^m`.
    pub fn radial(m: u32) -> Self {
        let mut p = Self::zero(2 * m);
        let mut binom = C::one();
        for l in 0..=m {
            p.coeffs[2 * l as usize] = binom.clone();
            binom = binom * C::from_ratio((m - l) as i64, (l + 1) as i64);
        }
        p
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn coeffs(&self) -> &[C] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_exact_zero())
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.degree, other.degree, "degree mismatch");
        Self { degree: self.degree, coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a.clone() + b.clone()).collect() }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(&-C::one()))
    }

    pub fn scale(&self, c: &C) -> Self {
        Self { degree: self.degree, coeffs: self.coeffs.iter().map(|a| a.clone() * c.clone()).collect() }
    }

    /// `A = u∂_v − v∂_u`.
    pub fn angular(&self) -> Self {
        let k = self.degree as i64;
        let mut out = Self::zero(self.degree);
        for (i, c) in self.coeffs.iter().enumerate() {
            if c.is_exact_zero() {
                continue;
            }
            let ii = i as i64;
            if i > 0 {
                out.coeffs[i - 1] = out.coeffs[i - 1].clone() + c.clone() * C::from_ratio(ii, 1);
            }
            if (i as u32) < self.degree {
                out.coeffs[i + 1] = out.coeffs[i + 1].clone() - c.clone() * C::from_ratio(k - ii, 1);
            }
        }
        out
    }

    /// Mean of the polynomial over the unit circle.
    pub fn circle_mean(&self) -> C {
        let k = self.degree;
        let mut acc = C::zero();
        for (i, c) in self.coeffs.iter().enumerate() {
            if !c.is_exact_zero() {
                acc = acc + c.clone() * monomial_mean::<C>(k - i as u32, i as u32);
            }
        }
        acc
    }
}

/// Mean of `cos^p θ sin^q θ` over the circle: zero unless both exponents are
/// even, otherwise `(p−1)!!(q−1)!!/(p+q)!!`.
fn monomial_mean<C: Coefficient>(p: u32, q: u32) -> C {
    if p % 2 == 1 || q % 2 == 1 {
        return C::zero();
    }
    let mut m = C::one();
    let mut l = 2;
    while l <= p {
        m = m * C::from_ratio(l as i64 - 1, l as i64);
        l += 2;
    }
    let mut l = 2;
    while l <= q {
        m = m * C::from_ratio(l as i64 - 1, (p + l) as i64);
        l += 2;
    }
    m
}

/// Projection of `p` onto the span of `(u²+v²)^{k/2}`; zero for odd `k`.
pub fn circle_average<C: Coefficient>(p: &HomPoly<C>) -> HomPoly<C> {
    if p.degree % 2 == 1 {
        return HomPoly::zero(p.degree);
    }
    HomPoly::radial(p.degree / 2).scale(&p.circle_mean())
}

/// Solve `(u∂_v − v∂_u) q = r` with `q` of zero circle mean.
pub fn solve_angular<C: Coefficient>(r: &HomPoly<C>) -> Result<HomPoly<C>> {
    if !r.circle_mean().is_negligible() {
        return Err(Error::Grading(format!("angular equation needs zero circle average, got {}", r.circle_mean())));
    }
    let n = r.degree as usize + 1;
    let a_cols: Vec<HomPoly<C>> = (0..n).map(|i| HomPoly::monomial(r.degree, i as u32).angular()).collect();
    // Rows: the n components of A q = r, then the mean constraint.
    let mut rows: Vec<Vec<C>> = (0..n)
        .map(|row| {
            let mut v: Vec<C> = a_cols.iter().map(|col| col.coeffs[row].clone()).collect();
            v.push(r.coeffs[row].clone());
            v
        })
        .collect();
    let mut mean_row: Vec<C> = (0..n).map(|i| monomial_mean::<C>(r.degree - i as u32, i as u32)).collect();
    mean_row.push(C::zero());
    rows.push(mean_row);

    let mut pivot_cols = Vec::with_capacity(n);
    let mut row = 0;
    for col in 0..n {
        let best = (row..rows.len())
            .filter(|&r| !rows[r][col].is_exact_zero())
            .max_by(|&a, &b| rows[a][col].abs().partial_cmp(&rows[b][col].abs()).unwrap_or(std::cmp::Ordering::Equal));
        let Some(p) = best else { continue };
        rows.swap(row, p);
        let inv = C::one() / rows[row][col].clone();
        for c in col..=n {
            rows[row][c] = rows[row][c].clone() * inv.clone();
        }
        for r2 in 0..rows.len() {
            if r2 != row && !rows[r2][col].is_exact_zero() {
                let f = rows[r2][col].clone();
                for c in col..=n {
                    let delta = f.clone() * rows[row][c].clone();
                    rows[r2][c] = rows[r2][c].clone() - delta;
                }
            }
        }
        pivot_cols.push(col);
        row += 1;
    }
    if rows[row..].iter().any(|r| !r[n].is_negligible()) {
        return Err(Error::Grading("angular equation is inconsistent".into()));
    }
    let mut q = HomPoly::zero(r.degree);
    for (r_idx, &col) in pivot_cols.iter().enumerate() {
        q.coeffs[col] = rows[r_idx][n].clone();
    }
    Ok(q)
}

/// Basis term `t^a s^{j−k/2} u^{k−i} v^i`; ordered by `(j, k, i, a)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Monomial {
    pub j: i64,
    pub k: u32,
    pub i: u32,
    pub a: u32,
}

impl Monomial {
    /// Twice the `s`-exponent, `2j − k`.
    pub fn s_twice(&self) -> i64 {
        2 * self.j - self.k as i64
    }

    pub fn u_power(&self) -> u32 {
        self.k - self.i
    }
}

/// Splitting `F_{j,k} = F⁰_{j,k} ⊕ F^inv_{j,k}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Space {
    /// Zero circle average.
    Zero,
    /// Multiples of `(u²+v²)^{k/2}`.
    Invariant,
}

/// Truncated element of `⊕ F_{j,k}`.
#[derive(Clone, Debug, PartialEq)]
pub struct GradedSymbol<C> {
    terms: BTreeMap<Monomial, C>,
    truncation: Option<u32>,
}

impl<C: Coefficient> Default for GradedSymbol<C> {
    fn default() -> Self {
        Self::zero(None)
    }
}

impl<C: Coefficient> GradedSymbol<C> {
    pub fn zero(truncation: Option<u32>) -> Self {
        Self { terms: BTreeMap::new(), truncation }
    }

    /// `H₂ = s(u² + v²)`.
    pub fn h2(truncation: Option<u32>) -> Self {
        let mut h = Self::zero(truncation);
        h.add_block(2, 0, &HomPoly::radial(1));
        h
    }

    /// Single term `c · t^a · s^{s_twice/2} · u^p v^q`.
    pub fn term(coeff: C, t_power: u32, s_twice: i64, u_power: u32, v_power: u32) -> Result<Self> {
        let k = u_power + v_power;
        let twice_j = s_twice + k as i64;
        if twice_j % 2 != 0 {
            return Err(Error::Grading(format!("s^({s_twice}/2) with degree {k} has no integer grade")));
        }
        let mut h = Self::zero(None);
        h.add_term(Monomial { j: twice_j / 2, k, i: v_power, a: t_power }, coeff);
        Ok(h)
    }

    /// Block `t^a · s^{j−k/2} · P(u,v)` in grade `(j, deg P)`.
    pub fn block(j: i64, t_power: u32, poly: &HomPoly<C>, truncation: Option<u32>) -> Self {
        let mut h = Self::zero(truncation);
        h.add_block(j, t_power, poly);
        h
    }

    fn add_block(&mut self, j: i64, t_power: u32, poly: &HomPoly<C>) {
        for (i, c) in poly.coeffs.iter().enumerate() {
            self.add_term(Monomial { j, k: poly.degree, i: i as u32, a: t_power }, c.clone());
        }
    }

    fn add_term(&mut self, m: Monomial, c: C) {
        if c.is_exact_zero() || self.truncation.is_some_and(|t| m.k > t) {
            return;
        }
        let entry = self.terms.entry(m).or_insert_with(C::zero);
        *entry = entry.clone() + c;
        // Float coefficients below the rounding level are dropped.
        if entry.is_negligible() {
            self.terms.remove(&m);
        }
    }

    pub fn truncation(&self) -> Option<u32> {
        self.truncation
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &C)> {
        self.terms.iter()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coefficient(&self, m: &Monomial) -> C {
        self.terms.get(m).cloned().unwrap_or_else(C::zero)
    }

    /// Drop every grade with `k > order` and record the truncation.
    pub fn truncate(&self, order: u32) -> Self {
        let order = self.truncation.map_or(order, |t| t.min(order));
        Self { terms: self.terms.iter().filter(|(m, _)| m.k <= order).map(|(m, c)| (*m, c.clone())).collect(), truncation: Some(order) }
    }

    pub fn with_truncation(&self, truncation: Option<u32>) -> Self {
        match truncation {
            Some(t) => self.truncate(t),
            None => Self { terms: self.terms.clone(), truncation: None },
        }
    }

    pub fn grades(&self) -> BTreeSet<(i64, u32)> {
        self.terms.keys().map(|m| (m.j, m.k)).collect()
    }

    /// Terms of grade `(j, k)` as a map `t-power → HomPoly`.
    pub fn grade_block(&self, j: i64, k: u32) -> BTreeMap<u32, HomPoly<C>> {
        let mut out: BTreeMap<u32, HomPoly<C>> = BTreeMap::new();
        for (m, c) in self.terms.range(Monomial { j, k, i: 0, a: 0 }..=Monomial { j, k, i: k, a: u32::MAX }) {
            let p = out.entry(m.a).or_insert_with(|| HomPoly::zero(k));
            p.coeffs[m.i as usize] = c.clone();
        }
        out
    }

    /// Restriction to grade `(j, k)`.
    pub fn grade(&self, j: i64, k: u32) -> Self {
        let mut out = Self::zero(self.truncation);
        for (a, p) in self.grade_block(j, k) {
            out.add_block(j, a, &p);
        }
        out
    }

    /// Restriction to grades with `k ≤ order`, without changing truncation.
    pub fn up_to(&self, order: u32) -> Self {
        Self { terms: self.terms.iter().filter(|(m, _)| m.k <= order).map(|(m, c)| (*m, c.clone())).collect(), truncation: self.truncation }
    }

    /// Restriction to grades with `k > order`.
    pub fn above(&self, order: u32) -> Self {
        Self { terms: self.terms.iter().filter(|(m, _)| m.k > order).map(|(m, c)| (*m, c.clone())).collect(), truncation: self.truncation }
    }

    /// Component in `F⁰` or `F^inv`, grade by grade.
    pub fn component(&self, space: Space) -> Self {
        let mut out = Self::zero(self.truncation);
        for (j, k) in self.grades() {
            for (a, p) in self.grade_block(j, k) {
                let avg = circle_average(&p);
                match space {
                    Space::Invariant => out.add_block(j, a, &avg),
                    Space::Zero => out.add_block(j, a, &p.sub(&avg)),
                }
            }
        }
        out
    }

    /// Every term lies in grade `(j, k)` and in the given space.
    pub fn lies_in(&self, j: i64, k: u32, space: Option<Space>) -> bool {
        if self.terms.keys().any(|m| m.j != j || m.k != k) {
            return false;
        }
        match space {
            None => true,
            Some(Space::Zero) => self.component(Space::Invariant).is_zero(),
            Some(Space::Invariant) => self.component(Space::Zero).is_zero(),
        }
    }

    fn combined_truncation(&self, other: &Self) -> Option<u32> {
        match (self.truncation, other.truncation) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = Self { terms: self.terms.clone(), truncation: self.combined_truncation(other) };
        if let Some(t) = out.truncation {
            out.terms.retain(|m, _| m.k <= t);
        }
        for (m, c) in &other.terms {
            out.add_term(*m, c.clone());
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(&-C::one()))
    }

    pub fn scale(&self, c: &C) -> Self {
        let mut out = Self::zero(self.truncation);
        for (m, a) in &self.terms {
            out.add_term(*m, a.clone() * c.clone());
        }
        out
    }

    /// Poisson bracket, truncated at the smaller of the two truncations.
    pub fn poisson(&self, other: &Self) -> Self {
        let mut out = Self::zero(self.combined_truncation(other));
        for (m1, c1) in &self.terms {
            for (m2, c2) in &other.terms {
                let c12 = c1.clone() * c2.clone();
                let j = m1.j + m2.j - 1;
                // Base part: (γ₁ b − a γ₂) t^{a+b−1} s^{γ₁+γ₂−1} · PQ.
                let base = m1.s_twice() * m2.a as i64 - m1.a as i64 * m2.s_twice();
                if base != 0 {
                    let m = Monomial { j, k: m1.k + m2.k, i: m1.i + m2.i, a: m1.a + m2.a - 1 };
                    out.add_term(m, c12.clone() * C::from_ratio(base, 2));
                }
                // Fibre part: (p₁q₂ − q₁p₂) u^{p₁+p₂−1} v^{q₁+q₂−1}.
                let fibre = m1.u_power() as i64 * m2.i as i64 - m1.i as i64 * m2.u_power() as i64;
                if fibre != 0 {
                    let m = Monomial { j, k: m1.k + m2.k - 2, i: m1.i + m2.i - 1, a: m1.a + m2.a };
                    out.add_term(m, c12 * C::from_ratio(fibre, 1));
                }
            }
        }
        out
    }

    /// Canonical text: terms `c * t^a * s^(g/2) * u^p v^q` joined by ` + `,
    /// in `(j, k, i, a)` order; `0` for the zero symbol.
    pub fn canonical_text(&self) -> String {
        if self.terms.is_empty() {
            return "0".into();
        }
        self.terms
            .iter()
            .map(|(m, c)| format!("{} * t^{} * s^({}/2) * u^{} v^{}", c.canonical(), m.a, m.s_twice(), m.u_power(), m.i))
            .collect::<Vec<_>>()
            .join(" + ")
    }

    /// Inverse of [`GradedSymbol::canonical_text`]; the result is untruncated.
    pub fn parse_canonical(text: &str) -> Result<Self> {
        let text = text.trim();
        let mut out = Self::zero(None);
        if text == "0" {
            return Ok(out);
        }
        for raw in text.split(" + ") {
            let bad = || Error::Parse(format!("malformed term `{raw}`"));
            let parts: Vec<&str> = raw.split(" * ").map(str::trim).collect();
            let [c, t, s, uv] = parts[..] else { return Err(bad()) };
            let c = C::parse_canonical(c).ok_or_else(bad)?;
            let a: u32 = t.strip_prefix("t^").and_then(|x| x.parse().ok()).ok_or_else(bad)?;
            let g: i64 = s
                .strip_prefix("s^(")
                .and_then(|x| x.strip_suffix("/2)"))
                .and_then(|x| x.parse().ok())
                .ok_or_else(bad)?;
            let (u, v) = uv.split_once(' ').ok_or_else(bad)?;
            let p: u32 = u.strip_prefix("u^").and_then(|x| x.parse().ok()).ok_or_else(bad)?;
            let q: u32 = v.strip_prefix("v^").and_then(|x| x.parse().ok()).ok_or_else(bad)?;
            out = out.add(&Self::term(c, a, g, p, q)?);
        }
        Ok(out)
    }
}

impl<C: Coefficient> fmt::Display for GradedSymbol<C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical_text())
    }
}

/// Solve `{H₂, F} = target` in the stated space.
///
/// * `Space::Zero`: `target ∈ F⁰_{j+1,k}`; returns `F ∈ F⁰_{j,k}` with
///   `2s·b·AQ = target`, so `{H₂, F}` equals `target` in degree `k` and the
///   remainder sits in degree `k + 2`.
/// * `Space::Invariant`: `target ∈ F^inv_{j+1,k}`, `k ≥ 2` even; returns
///   `F ∈ F^inv_{j,k−2}` whose coefficient is the `t`-antiderivative of the
///   target coefficient, so `{H₂, F} = target` exactly.
pub fn solve_cohomological<C: Coefficient>(target: &GradedSymbol<C>, space: Space) -> Result<GradedSymbol<C>> {
    let grades = target.grades();
    if grades.is_empty() {
        return Ok(GradedSymbol::zero(target.truncation));
    }
    if grades.len() > 1 {
        return Err(Error::Grading(format!("target spans several grades: {grades:?}")));
    }
    let (j, k) = *grades.iter().next().unwrap();
    let mut out = GradedSymbol::zero(None);
    match space {
        Space::Zero => {
            for (a, r) in target.grade_block(j, k) {
                if !circle_average(&r).is_zero() {
                    return Err(Error::Grading(format!("target in grade ({j},{k}) has a nonzero circle average")));
                }
                let q = solve_angular(&r)?.scale(&C::from_ratio(1, 2));
                out.add_block(j - 1, a, &q);
            }
        }
        Space::Invariant => {
            if k % 2 == 1 {
                return Err(Error::Grading(format!("F^inv is trivial in odd degree {k}")));
            }
            if k < 2 {
                return Err(Error::Grading("invariant targets need degree at least 2".into()));
            }
            for (a, r) in target.grade_block(j, k) {
                if !r.sub(&circle_average(&r)).is_zero() {
                    return Err(Error::Grading(format!("target in grade ({j},{k}) is not invariant")));
                }
                let c = r.circle_mean() * C::from_ratio(1, a as i64 + 1);
                out.add_block(j - 1, a + 1, &HomPoly::radial(k / 2 - 1).scale(&c));
            }
        }
    }
    Ok(out)
}

/// Default cap on the number of Lie-series terms.
pub const DEFAULT_LIE_ORDER: usize = 10;

/// Partial sum `Σ_{n ≤ terms} ad_F^n h / n!` with `ad_F h = {F, h}`.
pub fn lie_series<C: Coefficient>(h: &GradedSymbol<C>, generator: &GradedSymbol<C>, terms: usize) -> GradedSymbol<C> {
    let mut sum = h.clone();
    let mut term = h.clone();
    for n in 1..=terms {
        term = generator.poisson(&term).scale(&C::from_ratio(1, n as i64));
        if term.is_zero() {
            break;
        }
        sum = sum.add(&term);
    }
    sum
}

/// `h ∘ φ_F = exp(ad_F) h`, summed until the truncated series terminates.
pub fn lie_transform<C: Coefficient>(h: &GradedSymbol<C>, generator: &GradedSymbol<C>, max_order: usize) -> Result<GradedSymbol<C>> {
    if generator.terms.keys().any(|m| m.j != 1) {
        return Err(Error::Grading("Lie generators must lie in F_{1,·}".into()));
    }
    let mut sum = h.clone();
    let mut term = h.clone();
    for n in 1..=max_order + 1 {
        term = generator.poisson(&term).scale(&C::from_ratio(1, n as i64));
        if term.is_zero() {
            return Ok(sum);
        }
        if n > max_order {
            break;
        }
        sum = sum.add(&term);
    }
    Err(Error::Resource(format!("Lie series did not terminate within {max_order} brackets")))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormalizationMode {
    /// Remove every `F⁰` component up to the order.
    Semiglobal,
    /// Also remove the invariant components by `t`-integration.
    Local,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Generator<C> {
    pub space: Space,
    pub symbol: GradedSymbol<C>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NormalForm<C> {
    /// Grades with `k ≤ order` of the transformed symbol.
    pub normal_form: GradedSymbol<C>,
    /// Generators in application order.
    pub generators: Vec<Generator<C>>,
    /// Grades with `k > order` that survive the working truncation.
    pub residual: GradedSymbol<C>,
    /// Truncation at which the whole computation ran.
    pub working_truncation: u32,
}

impl<C: Coefficient> NormalForm<C> {
    /// Apply the generators to `h` again, at the working truncation.
    pub fn replay(&self, h: &GradedSymbol<C>, max_order: usize) -> Result<GradedSymbol<C>> {
        let mut cur = h.truncate(self.working_truncation);
        for g in &self.generators {
            cur = lie_transform(&cur, &g.symbol, max_order)?;
        }
        Ok(cur)
    }
}

fn check_normalizable<C: Coefficient>(h: &GradedSymbol<C>) -> Result<()> {
    if let Some(m) = h.terms.keys().find(|m| m.j != 2) {
        return Err(Error::Precondition(format!("term in grade ({}, {}) is not homogeneous of degree 2", m.j, m.k)));
    }
    if let Some(m) = h.terms.keys().find(|m| m.k < 2) {
        return Err(Error::Precondition(format!("unexpected term of degree {} below the quadratic part", m.k)));
    }
    let quad = h.grade(2, 2).with_truncation(None);
    if quad != GradedSymbol::h2(None) {
        return Err(Error::Precondition(format!("quadratic part must be s(u^2 + v^2), got {quad}")));
    }
    Ok(())
}

/// Birkhoff normalization of `h = H₂ + O(k ≥ 3)` up to `order`.
///
/// For `k = 3, …, order` the `F⁰` part of grade `(2, k)` is removed by the
/// generator `F ∈ F⁰_{1,k}` solving `{H₂, F} = T`; since
/// `exp(ad_F) h = h − T + O(k+1)`, later steps never reintroduce lower
/// grades. Semiglobal mode stops there and leaves `H₂ + Σ w_{2k}(u²+v²)^k`.
///
/// Local mode then removes the invariant grades `(2, 2m)` with generators in
/// `F^inv_{1,2m−2}`. A degree-two invariant generator rotates `F⁰` terms
/// without raising their degree, so the exponential series would not close
/// over polynomials; local mode therefore runs at truncation `order`, where
/// no `F⁰` part is left after the first step.
pub fn birkhoff_normalize<C: Coefficient>(h: &GradedSymbol<C>, order: u32, mode: NormalizationMode) -> Result<NormalForm<C>> {
    birkhoff_normalize_with(h, order, mode, DEFAULT_LIE_ORDER)
}

pub fn birkhoff_normalize_with<C: Coefficient>(
    h: &GradedSymbol<C>,
    order: u32,
    mode: NormalizationMode,
    max_lie_order: usize,
) -> Result<NormalForm<C>> {
    check_normalizable(h)?;
    if order < 2 {
        return Err(Error::Precondition(format!("order must be at least 2, got {order}")));
    }
    let working = match mode {
        NormalizationMode::Local => order,
        NormalizationMode::Semiglobal => h.truncation.unwrap_or(order),
    };
    if working < order {
        return Err(Error::Precondition(format!("input truncated at {working}, below the requested order {order}")));
    }
    let mut cur = h.truncate(working);
    let mut generators = Vec::new();
    for k in 3..=order {
        let target = cur.grade(2, k).component(Space::Zero);
        if target.is_zero() {
            continue;
        }
        let f = solve_cohomological(&target, Space::Zero)?.truncate(working);
        cur = lie_transform(&cur, &f, max_lie_order)?;
        generators.push(Generator { space: Space::Zero, symbol: f });
    }
    if mode == NormalizationMode::Local {
        for k in (4..=order).step_by(2) {
            let target = cur.grade(2, k);
            if target.is_zero() {
                continue;
            }
            let f = solve_cohomological(&target, Space::Invariant)?.truncate(working);
            cur = lie_transform(&cur, &f, max_lie_order)?;
            generators.push(Generator { space: Space::Invariant, symbol: f });
        }
    }
    Ok(NormalForm { normal_form: cur.up_to(order), residual: cur.above(order), generators, working_truncation: working })
}

/// Named test inputs: `H2` and `H2+u3` (`H₂ + s^{1/2}u³`).
pub fn preset(name: &str, truncation: Option<u32>) -> Result<GradedSymbol<BigRational>> {
    let h2 = GradedSymbol::h2(truncation);
    match name {
        "H2" => Ok(h2),
        "H2+u3" => Ok(h2.add(&GradedSymbol::term(BigRational::from_ratio(1, 1), 0, 1, 3, 0)?.with_truncation(truncation))),
        other => Err(Error::Configuration(format!("unknown normal-form input `{other}` (expected H2 or H2+u3)"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type Q = BigRational;

    fn q(n: i64, d: i64) -> Q {
        Q::from_ratio(n, d)
    }

    fn poly(c: &[(i64, i64)]) -> HomPoly<Q> {
        HomPoly::from_coeffs(c.iter().map(|&(n, d)| q(n, d)).collect())
    }

    #[test]
    fn circle_averages() {
        assert_eq!(circle_average(&poly(&[(1, 1), (0, 1), (0, 1)])), poly(&[(1, 2), (0, 1), (1, 2)]));
        assert!(circle_average(&poly(&[(1, 1), (0, 1), (0, 1), (0, 1)])).is_zero());
        let u2v2 = HomPoly::<Q>::monomial(4, 2);
        assert_eq!(circle_average(&u2v2), HomPoly::radial(2).scale(&q(1, 8)));
    }

    #[test]
    fn angular_solutions() {
        let r = poly(&[(1, 1), (0, 1), (-1, 1)]);
        assert_eq!(solve_angular(&r).unwrap(), poly(&[(0, 1), (1, 1), (0, 1)]));
        let u3 = HomPoly::<Q>::monomial(3, 0);
        let sol = solve_angular(&u3).unwrap();
        assert_eq!(sol, poly(&[(0, 1), (1, 1), (0, 1), (2, 3)]));
        assert_eq!(sol.angular(), u3);
        assert!(solve_angular(&HomPoly::<Q>::zero(4)).unwrap().is_zero());
        assert!(solve_angular(&HomPoly::<Q>::monomial(2, 0)).is_err());
    }

    #[test]
    fn bracket_with_h2() {
        let h2 = GradedSymbol::<Q>::h2(None);
        let f = GradedSymbol::block(1, 1, &HomPoly::radial(1), None);
        assert_eq!(h2.poisson(&f), GradedSymbol::block(2, 0, &HomPoly::radial(2), None));
        let g = GradedSymbol::block(3, 0, &HomPoly::radial(2), None);
        assert!(h2.poisson(&g).is_zero());
    }

    #[test]
    fn canonical_roundtrip() {
        let h = preset("H2+u3", None).unwrap();
        let text = h.canonical_text();
        assert_eq!(text, "1 * t^0 * s^(2/2) * u^2 v^0 + 1 * t^0 * s^(2/2) * u^0 v^2 + 1 * t^0 * s^(1/2) * u^3 v^0");
        assert_eq!(GradedSymbol::<Q>::parse_canonical(&text).unwrap(), h);
        assert_eq!(GradedSymbol::<Q>::zero(None).canonical_text(), "0");
        assert!(GradedSymbol::<Q>::parse_canonical("1 * t^0 * s^(1/2) * u^2 v^0").is_err());
    }

    #[test]
    fn cohomological_zero_mode_example() {
        let target = GradedSymbol::term(q(1, 1), 0, 1, 3, 0).unwrap();
        let f = solve_cohomological(&target, Space::Zero).unwrap();
        let expected = GradedSymbol::term(q(1, 2), 0, -1, 2, 1).unwrap().add(&GradedSymbol::term(q(1, 3), 0, -1, 0, 3).unwrap());
        assert_eq!(f, expected);
        let bracket = GradedSymbol::h2(None).poisson(&f);
        assert_eq!(bracket.grade(2, 3), target);
        assert!(bracket.sub(&target).grades().iter().all(|&(_, k)| k == 5));
    }

    #[test]
    fn cohomological_invariant_mode_example() {
        let target = GradedSymbol::block(2, 0, &HomPoly::<Q>::radial(2), None);
        let f = solve_cohomological(&target, Space::Invariant).unwrap();
        assert_eq!(f, GradedSymbol::block(1, 1, &HomPoly::radial(1), None));
        assert_eq!(GradedSymbol::h2(None).poisson(&f), target);
        let odd = GradedSymbol::<Q>::term(q(1, 1), 0, 1, 3, 0).unwrap();
        assert!(solve_cohomological(&odd, Space::Invariant).is_err());
        assert!(solve_cohomological(&GradedSymbol::<Q>::zero(None), Space::Zero).unwrap().is_zero());
    }

    #[test]
    fn lie_transform_identity_and_first_order() {
        let h = preset("H2+u3", Some(6)).unwrap();
        assert_eq!(lie_transform(&h, &GradedSymbol::zero(None), 10).unwrap(), h);
        let f = GradedSymbol::term(q(1, 2), 0, -1, 2, 1).unwrap();
        assert_eq!(lie_series(&h, &f, 1), h.add(&f.poisson(&h)));
    }

    #[test]
    fn normalizing_h2_is_trivial() {
        let h = GradedSymbol::<Q>::h2(Some(6));
        let nf = birkhoff_normalize(&h, 6, NormalizationMode::Semiglobal).unwrap();
        assert_eq!(nf.normal_form, h);
        assert!(nf.generators.is_empty());
        assert!(nf.residual.is_zero());
    }

    #[test]
    fn precondition_rejects_bad_quadratic_part() {
        let h = GradedSymbol::<Q>::h2(None).scale(&q(2, 1));
        assert!(matches!(birkhoff_normalize(&h, 6, NormalizationMode::Local), Err(Error::Precondition(_))));
        let h = GradedSymbol::<Q>::h2(None).add(&GradedSymbol::term(q(1, 1), 0, 3, 3, 0).unwrap());
        assert!(matches!(birkhoff_normalize(&h, 6, NormalizationMode::Local), Err(Error::Precondition(_))));
    }

    #[test]
    fn float_coefficients_follow_rational_result() {
        let h = preset("H2+u3", Some(6)).unwrap();
        let exact = birkhoff_normalize(&h, 6, NormalizationMode::Local).unwrap();
        let hf = GradedSymbol::<f64>::h2(Some(6)).add(&GradedSymbol::term(1.0, 0, 1, 3, 0).unwrap());
        let float = birkhoff_normalize(&hf, 6, NormalizationMode::Local).unwrap();
        assert_eq!(exact.generators.len(), float.generators.len());
        assert_eq!(float.normal_form.len(), 2);
    }
}
