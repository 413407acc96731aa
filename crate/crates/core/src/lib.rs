pub mod catalog;
pub mod dynamics;
pub mod error;
pub mod moyal;
pub mod normalform;
pub mod oracle;
pub mod polysym;
pub mod spectrum;

pub use error::{Error, Result};
pub use polysym::{Coeff, Exponent, PolySymbol, Rational, Var};

/// Shortest round-trip text of `v`, in exponent form outside `[1e-4, 1e15)`.
pub fn format_number(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || !v.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}
