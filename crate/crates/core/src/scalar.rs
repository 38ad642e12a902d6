//! Scalar abstractions.
//!
//! Floating-point numerics are written against [`Real`], which both `f32` and
//! `f64` satisfy. The symbolic normal-form algebra is written against
//! [`Coefficient`], which is satisfied by exact rationals and by the float
//! types.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Float, FloatConst, FromPrimitive, Num, Signed, ToPrimitive};

/// Real floating-point scalar.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    /// Lossy conversion from an integer count.
    fn count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Field of coefficients for the graded symbol algebra.
pub trait Coefficient: Num + Signed + Clone + PartialEq + PartialOrd + Debug + Display + Send + Sync + 'static {
    fn from_ratio(numer: i64, denom: i64) -> Self;

    /// Exact zero test for exact fields, tolerance-free equality for floats.
    fn is_exact_zero(&self) -> bool {
        self.is_zero()
    }

    /// Zero up to the rounding level of the field; exact for rationals.
    fn is_negligible(&self) -> bool {
        self.is_exact_zero()
    }

    /// Canonical text used by the symbol serializer.
    fn canonical(&self) -> String {
        self.to_string()
    }

    fn parse_canonical(text: &str) -> Option<Self>;
}

impl Coefficient for BigRational {
    fn from_ratio(numer: i64, denom: i64) -> Self {
        BigRational::new(BigInt::from(numer), BigInt::from(denom))
    }

    fn parse_canonical(text: &str) -> Option<Self> {
        let text = text.trim();
        match text.split_once('/') {
            Some((n, d)) => {
                let n: BigInt = n.trim().parse().ok()?;
                let d: BigInt = d.trim().parse().ok()?;
                if d == BigInt::from(0) {
                    return None;
                }
                Some(BigRational::new(n, d))
            }
            None => Some(BigRational::from_integer(text.parse().ok()?)),
        }
    }
}

impl Coefficient for f64 {
    fn from_ratio(numer: i64, denom: i64) -> Self {
        numer as f64 / denom as f64
    }

    fn is_negligible(&self) -> bool {
        self.abs() < 1e-12
    }

    fn canonical(&self) -> String {
        format!("{:.16e}", self)
    }

    fn parse_canonical(text: &str) -> Option<Self> {
        let text = text.trim();
        match text.split_once('/') {
            Some((n, d)) => Some(n.trim().parse::<f64>().ok()? / d.trim().parse::<f64>().ok()?),
            None => text.parse().ok(),
        }
    }
}

/// Compensated (Kahan–Neumaier) accumulator.
#[derive(Clone, Copy, Debug, Default)]
pub struct KahanSum<T> {
    sum: T,
    comp: T,
}

impl<T: Real> KahanSum<T> {
    pub fn new() -> Self {
        Self { sum: T::zero(), comp: T::zero() }
    }

    pub fn add(&mut self, x: T) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp = self.comp + ((self.sum - t) + x);
        } else {
            self.comp = self.comp + ((x - t) + self.sum);
        }
        self.sum = t;
    }

    pub fn value(&self) -> T {
        self.sum + self.comp
    }
}

impl<T: Real> FromIterator<T> for KahanSum<T> {
    fn from_iter<I: IntoIterator<Item = T>>(iter: I) -> Self {
        let mut acc = KahanSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

/// Format a float with 17 significant digits, the text form used by every
/// exported artifact.
pub fn fmt17(x: f64) -> String {
    if x.is_finite() {
        format!("{:.16e}", x)
    } else {
        x.to_string()
    }
}
