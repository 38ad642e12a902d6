pub mod discretize;
pub mod dynamics;
pub mod eigensolve;
pub mod error;
pub mod exact_heisenberg;
pub mod heat;
pub mod model;
pub mod normal_form;
pub mod scalar;
pub mod sparse;
pub mod weyl_qe;

pub use error::{Error, Result};
pub use scalar::{Coefficient, Real};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Exact flat spectrum in double precision.
pub type Spectrum = exact_heisenberg::SpectrumList<f64>;
/// Exact flat spectrum in single precision.
pub type SpectrumF32 = exact_heisenberg::SpectrumList<f32>;
/// Graded symbol with exact rational coefficients.
pub type Symbol = normal_form::GradedSymbol<num_rational::BigRational>;
/// Graded symbol with floating coefficients.
pub type SymbolF64 = normal_form::GradedSymbol<f64>;
pub type NormalFormQ = normal_form::NormalForm<num_rational::BigRational>;
