//! Reference spectra from matrix quantisation.
//!
//! Two strategies implement [`SpectrumOracle`]: `grid` (Fourier grid, for
//! kinetic-plus-potential Hamiltonians) and `fock` (Weyl quantisation of
//! polynomial symbols in the oscillator basis). An [`OracleRegistry`] maps
//! names to strategies.

pub mod eigen;
mod fock;
mod grid;

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

pub use fock::{fock_spectrum, FockOptions};
pub use grid::{grid_eigenvalues, grid_spectrum, GridOptions};

use crate::catalog::{HamiltonianModel, Negated, SharedModel};
use crate::dynamics::find_fixed_point;
use crate::error::{Error, Result};

#[derive(Clone, Debug, Serialize)]
pub struct OracleSpectrum {
    pub method: String,
    pub hbar: f64,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Change of each level under the last resolution doubling.
    pub estimates: Vec<f64>,
    /// Grid points or basis size of the reported values.
    pub size: usize,
    pub domain: Option<(f64, f64)>,
    pub doublings: usize,
    /// Largest level change after each doubling.
    pub history: Vec<f64>,
    /// True when the values are `-(levels of -H)`, listed from the top.
    pub negated: bool,
}

impl OracleSpectrum {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "n,E,err_est")?;
        for (n, (e, d)) in self.eigenvalues.iter().zip(&self.estimates).enumerate() {
            writeln!(w, "{n},{},{}", crate::format_number(*e), crate::format_number(*d))?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("oracle spectrum serializes")
    }

    fn negate(mut self) -> Self {
        for e in &mut self.eigenvalues {
            *e = -*e;
        }
        self.negated = !self.negated;
        self
    }
}

pub(crate) fn max_change(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Settings shared by the strategies.
#[derive(Clone, Copy, Debug)]
pub struct OracleRequest {
    pub hbar: f64,
    pub levels: usize,
    pub tolerance: f64,
    /// Quantise `-H` and negate, for Hamiltonians with a maximum.
    pub negate: bool,
}

pub trait SpectrumOracle: Send + Sync {
    fn name(&self) -> &'static str;

    fn supports(&self, model: &dyn HamiltonianModel) -> bool;

    fn compute(&self, model: &dyn HamiltonianModel, req: &OracleRequest) -> Result<OracleSpectrum>;

    /// Handles the negation request around [`SpectrumOracle::compute`].
    fn spectrum(&self, model: SharedModel, req: &OracleRequest) -> Result<OracleSpectrum> {
        if req.negate {
            let neg = Negated(model);
            Ok(self.compute(&neg, &OracleRequest { negate: false, ..*req })?.negate())
        } else {
            self.compute(model.as_ref(), req)
        }
    }
}

pub struct GridOracle;

impl SpectrumOracle for GridOracle {
    fn name(&self) -> &'static str {
        "grid"
    }

    fn supports(&self, model: &dyn HamiltonianModel) -> bool {
        model.kinetic_potential(1.0).is_some()
    }

    fn compute(&self, model: &dyn HamiltonianModel, req: &OracleRequest) -> Result<OracleSpectrum> {
        let kp = model.kinetic_potential(req.hbar).ok_or_else(|| {
            Error::Unsupported(format!("grid oracle needs a p^2/2m + V(x) form; {} has none", model.name()))
        })?;
        let h = kp.hamiltonian();
        let center =
            find_fixed_point(&h, model.fixed_point_guess()).map(|f| f.x).unwrap_or(model.fixed_point_guess().0);
        let opts = GridOptions { center, tolerance: req.tolerance, ..GridOptions::default() };
        grid_spectrum(&|x| kp.v(x), kp.mass, req.hbar, req.levels, &opts)
    }
}

pub struct FockOracle;

impl SpectrumOracle for FockOracle {
    fn name(&self) -> &'static str {
        "fock"
    }

    fn supports(&self, model: &dyn HamiltonianModel) -> bool {
        model.symbol().is_some()
    }

    fn compute(&self, model: &dyn HamiltonianModel, req: &OracleRequest) -> Result<OracleSpectrum> {
        let sym = model.symbol().ok_or_else(|| {
            Error::Unsupported(format!("fock oracle needs a polynomial symbol; {} has none", model.name()))
        })?;
        let opts = FockOptions { tolerance: req.tolerance, ..FockOptions::default() };
        fock_spectrum(&sym, req.hbar, req.levels, &opts)
    }
}

/// Name -> oracle strategy.
pub struct OracleRegistry {
    oracles: BTreeMap<&'static str, Box<dyn SpectrumOracle>>,
}

impl OracleRegistry {
    pub fn empty() -> Self {
        OracleRegistry { oracles: BTreeMap::new() }
    }

    pub fn builtin() -> Self {
        let mut r = OracleRegistry::empty();
        r.register(Box::new(GridOracle));
        r.register(Box::new(FockOracle));
        r
    }

    pub fn register(&mut self, oracle: Box<dyn SpectrumOracle>) {
        self.oracles.insert(oracle.name(), oracle);
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.oracles.keys().copied()
    }

    pub fn get(&self, name: &str) -> Result<&dyn SpectrumOracle> {
        self.oracles.get(name).map(|b| b.as_ref()).ok_or_else(|| {
            let known: Vec<&str> = self.names().collect();
            Error::InvalidArgument(format!("unknown oracle '{name}' (known: {})", known.join(", ")))
        })
    }

    /// The named oracle, or the first one (grid before fock) that supports
    /// the model, or `-model` when `negate` is set.
    pub fn select(&self, name: Option<&str>, model: &SharedModel, negate: bool) -> Result<&dyn SpectrumOracle> {
        if let Some(n) = name {
            return self.get(n);
        }
        let neg;
        let target: &dyn HamiltonianModel = if negate {
            neg = Negated(model.clone());
            &neg
        } else {
            model.as_ref()
        };
        ["grid", "fock"]
            .iter()
            .filter_map(|n| self.oracles.get(n))
            .map(|b| b.as_ref())
            .find(|o| o.supports(target))
            .ok_or_else(|| Error::Unsupported(format!("no oracle supports {}", target.name())))
    }
}

impl Default for OracleRegistry {
    fn default() -> Self {
        OracleRegistry::builtin()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{Catalog, Params};

    #[test]
    fn registry_selection() {
        let reg = OracleRegistry::builtin();
        assert_eq!(reg.names().collect::<Vec<_>>(), ["fock", "grid"]);
        let cat = Catalog::builtin();
        let i2 = cat.build("symbol_i2", &Params::new()).unwrap();
        assert_eq!(reg.select(None, &i2, false).unwrap().name(), "fock");
        let morse = cat.build("morse", &Params::new()).unwrap();
        assert_eq!(reg.select(None, &morse, false).unwrap().name(), "grid");
        assert!(reg.get("lanczos").is_err());
        let top: SharedModel = std::sync::Arc::new(crate::catalog::SymbolModel::parse("top", "-p^2 - x^2").unwrap());
        assert_eq!(reg.select(None, &top, false).unwrap().name(), "fock");
        assert_eq!(reg.select(None, &top, true).unwrap().name(), "grid");
    }

    #[test]
    fn oracles_agree_on_perturbed_quartic() {
        let reg = OracleRegistry::builtin();
        let model = Catalog::builtin().build("perturbed_quartic", &Params::new()).unwrap();
        let req = OracleRequest { hbar: 1.0, levels: 8, tolerance: 1e-11, negate: false };
        let g = reg.get("grid").unwrap().spectrum(model.clone(), &req).unwrap();
        let f = reg.get("fock").unwrap().spectrum(model, &req).unwrap();
        assert!(max_change(&g.eigenvalues, &f.eigenvalues) < 1e-8);
    }

    #[test]
    fn negated_request() {
        let reg = OracleRegistry::builtin();
        let model: SharedModel = std::sync::Arc::new(crate::catalog::SymbolModel::parse("top", "-I - I^2/10").unwrap());
        let req = OracleRequest { hbar: 0.5, levels: 3, tolerance: 1e-10, negate: true };
        let s = reg.get("fock").unwrap().spectrum(model, &req).unwrap();
        assert!(s.negated);
        // -(a + a^2/10 + hbar^2/40) for the Weyl symbol I^2 -> I^2 + hbar^2/4
        for (n, e) in s.eigenvalues.iter().enumerate() {
            let a = 0.5 * (n as f64 + 0.5);
            assert!((e + a + (a * a + 0.0625) / 10.0).abs() < 1e-10, "{n}: {e}");
        }
    }
}
