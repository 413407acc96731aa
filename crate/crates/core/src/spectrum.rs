//! Bohr-Sommerfeld eigenvalues with the second-order correction
//!
//! `E_n = E(A) + (hbar^2 / 48) c'(A)` at `A = (n + 1/2) hbar`, where
//! `c(A) = <{H, H}_2> / omega(A)` is the angle average of twice the Hessian
//! determinant over the loop of action `A`, divided by the signed frequency.
//!
//! Orbits are computed for the full symbol at the given `hbar`. Near a
//! maximum the spectrum of `-H` is computed and negated.

use std::io::Write;
use std::ops::RangeInclusive;

use rayon::prelude::*;
use serde::Serialize;

use crate::catalog::HamiltonianModel;
use crate::dynamics::{
    find_fixed_point, orbit_average, FixedPointReport, OrbitEngine, OrbitOptions, SmoothHamiltonian,
};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Order {
    Leading,
    Corrected,
}

impl Order {
    pub fn from_int(order: u32) -> Result<Self> {
        match order {
            0 => Ok(Order::Leading),
            2 => Ok(Order::Corrected),
            o => Err(Error::InvalidArgument(format!("order must be 0 or 2, got {o}"))),
        }
    }

    pub fn as_int(self) -> u32 {
        match self {
            Order::Leading => 0,
            Order::Corrected => 2,
        }
    }
}

/// Richardson-extrapolated central difference.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Derivative {
    pub value: f64,
    pub step: f64,
    /// `|D_R - D(step/2)|`.
    pub error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct LevelDiagnostics {
    pub period: f64,
    pub frequency: f64,
    pub contour_nodes: usize,
    pub quadrature_tol: f64,
    pub profile: Option<f64>,
    pub profile_slope: Option<Derivative>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Level {
    pub n: u32,
    pub action: f64,
    pub e0: f64,
    pub e2: f64,
    /// `E2 - E0`.
    pub correction: f64,
    /// Error estimate of the correction from the differencing.
    pub err_est: f64,
    pub diagnostics: LevelDiagnostics,
}

#[derive(Clone, Debug, Serialize)]
pub struct SkippedLevel {
    pub n: u32,
    pub action: f64,
    pub reason: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectrumResult {
    pub hamiltonian: String,
    pub hbar: f64,
    pub order: u32,
    pub ceiling: Option<f64>,
    /// True when the levels were obtained from `-H` and negated.
    pub negated: bool,
    pub fixed_point: FixedPointReport,
    pub levels: Vec<Level>,
    pub skipped: Vec<SkippedLevel>,
}

impl SpectrumResult {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "n,A,E0,E2,corr,err_est")?;
        for l in &self.levels {
            let f = crate::format_number;
            writeln!(w, "{},{},{},{},{},{}", l.n, f(l.action), f(l.e0), f(l.e2), f(l.correction), f(l.err_est))?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spectrum result serializes")
    }

    pub fn level(&self, n: u32) -> Option<&Level> {
        self.levels.iter().find(|l| l.n == n)
    }
}

/// Orbit engine oriented so that energy rises away from the fixed point.
#[derive(Clone, Debug)]
pub struct SpectrumEngine {
    engine: OrbitEngine,
    original: FixedPointReport,
    negated: bool,
}

impl SpectrumEngine {
    /// `ceiling` bounds the energy window of `H` (a lower bound when the
    /// fixed point is a maximum).
    pub fn new(h: &SmoothHamiltonian, fp: &FixedPointReport, ceiling: Option<f64>) -> Result<Self> {
        let engine = OrbitEngine::new(h, fp)?;
        let (engine, negated) = if engine.is_minimum() {
            (engine.with_ceiling(ceiling), false)
        } else {
            let e = OrbitEngine::new(&h.negated(), &fp.negated())?.with_ceiling(ceiling.map(|c| -c));
            (e, true)
        };
        Ok(SpectrumEngine { engine, original: fp.clone(), negated })
    }

    pub fn with_options(mut self, options: OrbitOptions) -> Self {
        self.engine = self.engine.with_options(options);
        self
    }

    pub fn is_negated(&self) -> bool {
        self.negated
    }

    pub fn orbit_engine(&self) -> &OrbitEngine {
        &self.engine
    }

    fn sign(&self) -> f64 {
        if self.negated {
            -1.0
        } else {
            1.0
        }
    }

    /// `c(A)` of the working (minimum-oriented) Hamiltonian.
    fn working_profile(&self, action: f64) -> Result<f64> {
        let orbit = self.engine.orbit_of_action(action)?;
        let h = self.engine.hamiltonian();
        Ok(orbit_average(&orbit, |x, p| h.hessian_bracket(x, p)) / orbit.frequency)
    }

    /// `c(A) = <{H, H}_2> / omega(A)` for the input Hamiltonian.
    pub fn correction_profile(&self, action: f64) -> Result<f64> {
        Ok(self.sign() * self.working_profile(action)?)
    }

    fn working_slope(&self, action: f64) -> Result<Derivative> {
        let step = (1e-3 * action).max(1e-4);
        let d = |s: f64| -> Result<f64> {
            Ok((self.working_profile(action + s)? - self.working_profile(action - s)?) / (2.0 * s))
        };
        if action - step <= 0.0 {
            return Err(Error::InvalidArgument(format!("action {action} too small for the differencing step {step}")));
        }
        let coarse = d(step)?;
        let fine = d(0.5 * step)?;
        let value = (4.0 * fine - coarse) / 3.0;
        Ok(Derivative { value, step, error: (value - fine).abs() })
    }

    /// `dc/dA` of the input Hamiltonian.
    pub fn profile_slope(&self, action: f64) -> Result<Derivative> {
        let mut d = self.working_slope(action)?;
        d.value *= self.sign();
        Ok(d)
    }

    pub fn level(&self, n: u32, hbar: f64, order: Order) -> Result<Level> {
        if !(hbar > 0.0) || !hbar.is_finite() {
            return Err(Error::InvalidArgument(format!("hbar must be positive, got {hbar}")));
        }
        let action = (n as f64 + 0.5) * hbar;
        let orbit = self.engine.orbit_of_action(action)?;
        let s = self.sign();
        let e0 = s * orbit.energy;
        let (correction, err_est, profile, slope) = match order {
            Order::Leading => (0.0, 0.0, None, None),
            Order::Corrected => {
                let slope = self.working_slope(action)?;
                let k = hbar * hbar / 48.0;
                let profile = self.working_profile(action)?;
                (
                    s * k * slope.value,
                    k * slope.error,
                    Some(s * profile),
                    Some(Derivative { value: s * slope.value, ..slope }),
                )
            }
        };
        Ok(Level {
            n,
            action,
            e0,
            e2: e0 + correction,
            correction,
            err_est,
            diagnostics: LevelDiagnostics {
                period: orbit.period,
                frequency: s * orbit.frequency,
                contour_nodes: orbit.nodes.len(),
                quadrature_tol: self.engine.options.quadrature_tol,
                profile,
                profile_slope: slope,
            },
        })
    }

    /// Levels over `range`; levels outside the window (or whose loops do
    /// not close) are listed as skipped.
    pub fn spectrum(&self, name: &str, range: RangeInclusive<u32>, hbar: f64, order: Order) -> Result<SpectrumResult> {
        let ns: Vec<u32> = range.collect();
        let results: Vec<(u32, Result<Level>)> = ns.par_iter().map(|&n| (n, self.level(n, hbar, order))).collect();
        let mut levels = Vec::new();
        let mut skipped = Vec::new();
        for (n, r) in results {
            match r {
                Ok(l) => levels.push(l),
                Err(e @ (Error::OutOfWindow { .. } | Error::OrbitNotClosed(_))) => {
                    skipped.push(SkippedLevel { n, action: (n as f64 + 0.5) * hbar, reason: e.to_string() })
                }
                Err(e) => return Err(e),
            }
        }
        Ok(SpectrumResult {
            hamiltonian: name.to_string(),
            hbar,
            order: order.as_int(),
            ceiling: self.engine.ceiling().map(|c| self.sign() * c),
            negated: self.negated,
            fixed_point: self.original.clone(),
            levels,
            skipped,
        })
    }
}

/// Full pipeline for a catalog model: fixed point from the model's guess,
/// genericity check, then the requested levels.
pub fn model_spectrum(
    model: &dyn HamiltonianModel,
    hbar: f64,
    range: RangeInclusive<u32>,
    order: u32,
    ceiling: Option<f64>,
) -> Result<SpectrumResult> {
    let h = model.hamiltonian(hbar)?;
    let fp = find_fixed_point(&h, model.fixed_point_guess())?;
    let ceiling = ceiling.or(model.energy_ceiling());
    SpectrumEngine::new(&h, &fp, ceiling)?.spectrum(&model.name(), range, hbar, Order::from_int(order)?)
}

/// `c(A)` for `H` around `fp`.
pub fn correction_profile(h: &SmoothHamiltonian, fp: &FixedPointReport, action: f64) -> Result<f64> {
    SpectrumEngine::new(h, fp, None)?.correction_profile(action)
}

/// Single level at order 0 or 2.
pub fn bs_eigenvalue(h: &SmoothHamiltonian, fp: &FixedPointReport, n: u32, hbar: f64, order: u32) -> Result<f64> {
    Ok(SpectrumEngine::new(h, fp, None)?.level(n, hbar, Order::from_int(order)?)?.e2)
}

pub fn bs_spectrum(
    h: &SmoothHamiltonian,
    fp: &FixedPointReport,
    levels: RangeInclusive<u32>,
    hbar: f64,
    order: u32,
    ceiling: Option<f64>,
) -> Result<SpectrumResult> {
    SpectrumEngine::new(h, fp, ceiling)?.spectrum("custom", levels, hbar, Order::from_int(order)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polysym::parse_expr;

    fn setup(s: &str, hbar: f64) -> (SmoothHamiltonian, FixedPointReport) {
        let h = SmoothHamiltonian::from_symbol(&parse_expr(s).unwrap(), hbar).unwrap();
        let fp = find_fixed_point(&h, (0.0, 0.0)).unwrap();
        (h, fp)
    }

    #[test]
    fn harmonic_profile_and_levels() {
        let (h, fp) = setup("I", 1.0);
        assert!((correction_profile(&h, &fp, 0.7).unwrap() - 2.0).abs() < 1e-12);
        let r = bs_spectrum(&h, &fp, 0..=9, 1.0, 2, None).unwrap();
        assert_eq!(r.levels.len(), 10);
        for l in &r.levels {
            assert!((l.e2 - (l.n as f64 + 0.5)).abs() < 1e-10);
            assert!(l.correction.abs() < 1e-10);
        }
    }

    #[test]
    fn function_of_action_profiles() {
        let (h, fp) = setup("I^2", 1.0);
        assert!((correction_profile(&h, &fp, 0.8).unwrap() - 9.6).abs() < 1e-10);
        assert!((bs_eigenvalue(&h, &fp, 0, 1.0, 2).unwrap() - 0.5).abs() < 1e-9);
        let (h, fp) = setup("I^3 - 5/4*h^2*I", 1.0);
        let e = bs_eigenvalue(&h, &fp, 1, 1.0, 2).unwrap();
        assert!((e - 3.375).abs() < 1e-9, "{e}");
    }

    #[test]
    fn kinetic_potential_profile() {
        // c(A) = (2/m) <V''> / omega for V = x^2/2 + x^4/10
        let (h, fp) = setup("p^2/2 + x^2/2 + x^4/10", 1.0);
        let eng = SpectrumEngine::new(&h, &fp, None).unwrap();
        let orbit = eng.orbit_engine().orbit_of_action(0.6).unwrap();
        let direct = 2.0 * orbit_average(&orbit, |x, _| 1.0 + 1.2 * x * x) / orbit.frequency;
        assert!((eng.correction_profile(0.6).unwrap() - direct).abs() < 1e-13);
    }

    #[test]
    fn ceiling_marks_levels_skipped() {
        let (h, fp) = setup("p^2/2 + x^2/2 + x^3/3", 1.0);
        let r = bs_spectrum(&h, &fp, 0..=9, 0.02, 2, Some(0.1)).unwrap();
        assert!(!r.skipped.is_empty());
        let first_skip = r.skipped[0].n;
        assert!(r.levels.iter().all(|l| l.n < first_skip));
        assert_eq!(r.levels.len() + r.skipped.len(), 10);
    }

    #[test]
    fn maximum_is_negated() {
        let (h, fp) = setup("-I - I^2/10", 0.5);
        let r = bs_spectrum(&h, &fp, 0..=3, 0.5, 2, None).unwrap();
        assert!(r.negated);
        for l in &r.levels {
            let a = l.action;
            // -(A + A^2/10) - (hbar^2/48) * d/dA c with c = 2 + 6A/5 ... c' = 1.2
            let expect = -(a + a * a / 10.0) - 0.25 / 48.0 * 1.2;
            assert!((l.e2 - expect).abs() < 1e-10, "{} vs {}", l.e2, expect);
        }
    }

    #[test]
    fn csv_layout() {
        let (h, fp) = setup("I", 1.0);
        let r = bs_spectrum(&h, &fp, 0..=1, 1.0, 0, None).unwrap();
        let mut out = Vec::new();
        r.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("n,A,E0,E2,corr,err_est\n0,0.5,"));
        assert_eq!(text.lines().count(), 3);
    }
}
