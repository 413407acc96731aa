//! Named Hamiltonian models.
//!
//! Every model is a `HamiltonianModel` trait object; builtins are registered
//! by name in a [`Catalog`] together with a factory taking numeric
//! parameters. User symbols and potentials go through the same trait.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::dynamics::SmoothHamiltonian;
use crate::error::{Error, Result};
use crate::polysym::{parse_expr, rat, rational_from_decimal, Coeff, NumericSymbol, PolySymbol, Rational};

/// `d^k V / dx^k` at `x`.
pub type PotentialPartialFn = Arc<dyn Fn(u32, f64) -> f64 + Send + Sync>;

/// `p^2 / 2m + V(x)`.
#[derive(Clone)]
pub struct KineticPotential {
    pub mass: f64,
    pub potential: PotentialPartialFn,
}

impl fmt::Debug for KineticPotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KineticPotential").field("mass", &self.mass).finish()
    }
}

impl KineticPotential {
    pub fn v(&self, x: f64) -> f64 {
        (self.potential)(0, x)
    }

    pub fn hamiltonian(&self) -> SmoothHamiltonian {
        let m = self.mass;
        let (v, d1, d2, dk) =
            (self.potential.clone(), self.potential.clone(), self.potential.clone(), self.potential.clone());
        SmoothHamiltonian::kinetic_potential(m, move |x| v(0, x), move |x| d1(1, x), move |x| d2(2, x)).with_partials(
            move |a, b, x, p| match (a, b) {
                (a, 0) => {
                    if a == 0 {
                        p * p / (2.0 * m) + dk(0, x)
                    } else {
                        dk(a, x)
                    }
                }
                (0, 1) => p / m,
                (0, 2) => 1.0 / m,
                _ => 0.0,
            },
        )
    }
}

pub trait HamiltonianModel: Send + Sync {
    fn name(&self) -> String;

    fn description(&self) -> String {
        self.name()
    }

    /// Exact polynomial symbol (possibly `hbar`-dependent), when there is one.
    fn symbol(&self) -> Option<PolySymbol>;

    /// Kinetic-plus-potential form at the given `hbar`, when there is one.
    fn kinetic_potential(&self, hbar: f64) -> Option<KineticPotential>;

    /// The symbol as an evaluatable function at `hbar`.
    fn hamiltonian(&self, hbar: f64) -> Result<SmoothHamiltonian> {
        if let Some(sym) = self.symbol() {
            return SmoothHamiltonian::from_symbol(&sym, hbar);
        }
        self.kinetic_potential(hbar)
            .map(|kp| kp.hamiltonian())
            .ok_or_else(|| Error::Unsupported(format!("model {} has no evaluatable form", self.name())))
    }

    fn fixed_point_guess(&self) -> (f64, f64) {
        (0.0, 0.0)
    }

    /// Default upper end of the energy window.
    fn energy_ceiling(&self) -> Option<f64> {
        None
    }
}

pub type SharedModel = Arc<dyn HamiltonianModel>;

/// A polynomial symbol.
#[derive(Clone, Debug)]
pub struct SymbolModel {
    pub name: String,
    pub symbol: PolySymbol,
    pub guess: (f64, f64),
    pub ceiling: Option<f64>,
}

impl SymbolModel {
    pub fn new(name: impl Into<String>, symbol: PolySymbol) -> Self {
        SymbolModel { name: name.into(), symbol, guess: (0.0, 0.0), ceiling: None }
    }

    pub fn parse(name: impl Into<String>, text: &str) -> Result<Self> {
        Ok(SymbolModel::new(name, parse_expr(text)?))
    }

    /// `p^2 / 2m + V(x)` with `V` a polynomial in `x` (and `hbar`).
    pub fn from_potential(name: impl Into<String>, potential: &str, mass: &Rational) -> Result<Self> {
        let v = parse_expr(potential)?;
        if v.terms().any(|(e, _)| e.p > 0) {
            return Err(Error::InvalidArgument("potential must not depend on p".into()));
        }
        if *mass <= Rational::from_integer(0.into()) {
            return Err(Error::InvalidArgument("mass must be positive".into()));
        }
        let kinetic = PolySymbol::monomial(0, 2, 0, Coeff::real(rat(1, 2) / mass));
        Ok(SymbolModel::new(name, &kinetic + &v))
    }

    pub fn with_guess(mut self, guess: (f64, f64)) -> Self {
        self.guess = guess;
        self
    }

    pub fn with_ceiling(mut self, ceiling: Option<f64>) -> Self {
        self.ceiling = ceiling;
        self
    }
}

impl HamiltonianModel for SymbolModel {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn description(&self) -> String {
        format!("{} = {}", self.name, self.symbol)
    }

    fn symbol(&self) -> Option<PolySymbol> {
        Some(self.symbol.clone())
    }

    fn kinetic_potential(&self, hbar: f64) -> Option<KineticPotential> {
        let kin = self.symbol.terms().filter(|(e, _)| e.p > 0).collect::<Vec<_>>();
        let [(e, c)] = kin.as_slice() else {
            return None;
        };
        if e.p != 2 || e.x != 0 || e.hbar != 0 || !c.is_real() {
            return None;
        }
        let half_inv_mass = crate::polysym::to_f64(&c.re);
        if half_inv_mass <= 0.0 {
            return None;
        }
        let v = PolySymbol::from_terms(self.symbol.terms().filter(|(e, _)| e.p == 0).map(|(e, c)| (*e, c.clone())));
        let num = Arc::new(NumericSymbol::new(&v, hbar).ok()?);
        Some(KineticPotential {
            mass: 0.5 / half_inv_mass,
            potential: Arc::new(move |k, x| match k {
                0 => num.value(x, 0.0),
                1 => num.gradient(x, 0.0)[0],
                2 => num.hessian(x, 0.0)[0][0],
                k => num.partial(k, 0, x, 0.0),
            }),
        })
    }

    fn fixed_point_guess(&self) -> (f64, f64) {
        self.guess
    }

    fn energy_ceiling(&self) -> Option<f64> {
        self.ceiling
    }
}

/// `p^2 / 2 + D (1 - exp(-alpha x))^2`.
#[derive(Clone, Debug)]
pub struct MorseModel {
    pub depth: f64,
    pub alpha: f64,
}

impl HamiltonianModel for MorseModel {
    fn name(&self) -> String {
        "morse".into()
    }

    fn description(&self) -> String {
        format!("morse: p^2/2 + {} (1 - exp(-{} x))^2", self.depth, self.alpha)
    }

    fn symbol(&self) -> Option<PolySymbol> {
        None
    }

    fn kinetic_potential(&self, _hbar: f64) -> Option<KineticPotential> {
        let (d, a) = (self.depth, self.alpha);
        Some(KineticPotential {
            mass: 1.0,
            potential: Arc::new(move |k, x| {
                let e1 = (-a * x).exp();
                if k == 0 {
                    d * (1.0 - e1).powi(2)
                } else {
                    // D (-2 (-a)^k e^{-ax} + (-2a)^k e^{-2ax})
                    d * (-2.0 * (-a).powi(k as i32) * e1 + (-2.0 * a).powi(k as i32) * e1 * e1)
                }
            }),
        })
    }

    fn energy_ceiling(&self) -> Option<f64> {
        Some(0.9 * self.depth)
    }
}

/// `-H`, for computing spectra near a maximum.
#[derive(Clone)]
pub struct Negated(pub SharedModel);

impl HamiltonianModel for Negated {
    fn name(&self) -> String {
        format!("-({})", self.0.name())
    }

    fn symbol(&self) -> Option<PolySymbol> {
        self.0.symbol().map(|s| -s)
    }

    /// Available when the negated symbol has the kinetic-plus-potential form.
    fn kinetic_potential(&self, hbar: f64) -> Option<KineticPotential> {
        SymbolModel::new(self.name(), self.symbol()?).kinetic_potential(hbar)
    }

    fn hamiltonian(&self, hbar: f64) -> Result<SmoothHamiltonian> {
        Ok(self.0.hamiltonian(hbar)?.negated())
    }

    fn fixed_point_guess(&self) -> (f64, f64) {
        self.0.fixed_point_guess()
    }

    fn energy_ceiling(&self) -> Option<f64> {
        self.0.energy_ceiling().map(|c| -c)
    }
}

/// Numeric parameters of a builtin, by name.
pub type Params = BTreeMap<String, f64>;

type Factory = Box<dyn Fn(&Params) -> Result<SharedModel> + Send + Sync>;

struct Entry {
    summary: &'static str,
    factory: Factory,
}

/// Name -> model factory.
pub struct Catalog {
    entries: BTreeMap<String, Entry>,
}

fn param(params: &Params, key: &str, default: f64) -> f64 {
    params.get(key).copied().unwrap_or(default)
}

fn param_rational(params: &Params, key: &str, default: &str) -> Result<Rational> {
    match params.get(key) {
        Some(v) => rational_from_decimal(*v),
        None => crate::polysym::parse_rational(default),
    }
}

fn check_known(params: &Params, allowed: &[&str]) -> Result<()> {
    for k in params.keys() {
        if !allowed.contains(&k.as_str()) {
            return Err(Error::InvalidArgument(format!(
                "unknown parameter '{k}' (expected one of: {})",
                if allowed.is_empty() { "none".to_string() } else { allowed.join(", ") }
            )));
        }
    }
    Ok(())
}

impl Catalog {
    pub fn empty() -> Self {
        Catalog { entries: BTreeMap::new() }
    }

    pub fn register<F>(&mut self, name: &str, summary: &'static str, factory: F)
    where
        F: Fn(&Params) -> Result<SharedModel> + Send + Sync + 'static,
    {
        self.entries.insert(name.to_string(), Entry { summary, factory: Box::new(factory) });
    }

    pub fn names(&self) -> impl Iterator<Item = (&str, &'static str)> {
        self.entries.iter().map(|(k, e)| (k.as_str(), e.summary))
    }

    pub fn build(&self, name: &str, params: &Params) -> Result<SharedModel> {
        let entry = self.entries.get(name).ok_or_else(|| {
            let known: Vec<&str> = self.entries.keys().map(|s| s.as_str()).collect();
            Error::InvalidArgument(format!("unknown builtin '{name}' (known: {})", known.join(", ")))
        })?;
        (entry.factory)(params)
    }

    pub fn builtin() -> Self {
        let mut c = Catalog::empty();
        c.register("harmonic", "p^2/2 + x^2/2", |p| {
            check_known(p, &[])?;
            Ok(Arc::new(SymbolModel::parse("harmonic", "p^2/2 + x^2/2")?))
        });
        c.register("shifted_harmonic", "p^2/2 + (x - x0)^2/2, x0 = 1", |p| {
            check_known(p, &["x0"])?;
            let x0 = param_rational(p, "x0", "1")?;
            let x = &PolySymbol::x() - &PolySymbol::constant(x0.clone());
            let sym = &PolySymbol::monomial(0, 2, 0, Coeff::real(rat(1, 2))) + &(&x * &x).scale_rational(&rat(1, 2));
            let guess = crate::polysym::to_f64(&x0);
            Ok(Arc::new(SymbolModel::new("shifted_harmonic", sym).with_guess((guess, 0.0))))
        });
        c.register("perturbed_quartic", "p^2/2 + x^2/2 + epsilon x^4, epsilon = 0.1", |p| {
            check_known(p, &["epsilon"])?;
            let eps = param_rational(p, "epsilon", "1/10")?;
            let sym = &parse_expr("p^2/2 + x^2/2")? + &PolySymbol::monomial(4, 0, 0, Coeff::real(eps));
            Ok(Arc::new(SymbolModel::new("perturbed_quartic", sym)))
        });
        c.register("pure_quartic", "p^2/2 + x^4 (degenerate minimum)", |p| {
            check_known(p, &[])?;
            Ok(Arc::new(SymbolModel::parse("pure_quartic", "p^2/2 + x^4")?.with_guess((0.1, 0.0))))
        });
        c.register("morse", "p^2/2 + D (1 - exp(-alpha x))^2, D = 0.5, alpha = 1", |p| {
            check_known(p, &["depth", "alpha"])?;
            let depth = param(p, "depth", 0.5);
            let alpha = param(p, "alpha", 1.0);
            if !(depth > 0.0 && alpha > 0.0) {
                return Err(Error::InvalidArgument("morse needs depth > 0 and alpha > 0".into()));
            }
            Ok(Arc::new(MorseModel { depth, alpha }))
        });
        c.register("symbol_i2", "I^2 with I = (x^2 + p^2)/2", |p| {
            check_known(p, &[])?;
            Ok(Arc::new(SymbolModel::parse("symbol_i2", "I^2")?))
        });
        c.register("symbol_i3", "I^3 - (5/4) hbar^2 I", |p| {
            check_known(p, &[])?;
            Ok(Arc::new(SymbolModel::parse("symbol_i3", "I^3 - 5/4*h^2*I")?))
        });
        c
    }
}

impl Default for Catalog {
    fn default() -> Self {
        Catalog::builtin()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polysym::rat_int;

    #[test]
    fn builtins_resolve() {
        let c = Catalog::builtin();
        let names: Vec<&str> = c.names().map(|n| n.0).collect();
        assert_eq!(
            names,
            ["harmonic", "morse", "perturbed_quartic", "pure_quartic", "shifted_harmonic", "symbol_i2", "symbol_i3"]
        );
        let q = c.build("perturbed_quartic", &Params::new()).unwrap();
        assert_eq!(q.symbol().unwrap().coeff(4, 0, 0).re, rat(1, 10));
        let mut p = Params::new();
        p.insert("epsilon".into(), 0.3);
        assert_eq!(c.build("perturbed_quartic", &p).unwrap().symbol().unwrap().coeff(4, 0, 0).re, rat(3, 10));
        p.insert("bogus".into(), 1.0);
        assert!(c.build("perturbed_quartic", &p).is_err());
        assert!(c.build("nope", &Params::new()).is_err());
    }

    #[test]
    fn kinetic_form_detection() {
        let c = Catalog::builtin();
        let q = c.build("perturbed_quartic", &Params::new()).unwrap();
        let kp = q.kinetic_potential(1.0).unwrap();
        assert_eq!(kp.mass, 1.0);
        assert!((kp.v(2.0) - 3.6).abs() < 1e-14);
        assert!(c.build("symbol_i2", &Params::new()).unwrap().kinetic_potential(1.0).is_none());
        let m = SymbolModel::from_potential("v", "x^2 + x^3", &rat_int(3)).unwrap();
        assert!((m.kinetic_potential(1.0).unwrap().mass - 3.0).abs() < 1e-15);
    }

    #[test]
    fn morse_derivatives() {
        let m = MorseModel { depth: 0.5, alpha: 1.0 };
        let kp = m.kinetic_potential(1.0).unwrap();
        let x = 0.3;
        let h = 1e-5;
        for k in 1..4 {
            let fd = ((kp.potential)(k - 1, x + h) - (kp.potential)(k - 1, x - h)) / (2.0 * h);
            assert!((fd - (kp.potential)(k, x)).abs() < 1e-8, "k = {k}");
        }
        let h = m.hamiltonian(1.0).unwrap();
        assert_eq!(h.partial(0, 2, 0.1, 0.2), Some(1.0));
    }
}
