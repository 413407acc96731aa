//! Periodic Fourier-grid discretisation of `p^2/2m + V(x)`.

use super::eigen::{symmetric_eigen, SymMatrix};
use super::{max_change, OracleSpectrum};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct GridOptions {
    /// Fixed box; chosen automatically from the WKB decay of the highest
    /// requested level when absent.
    pub domain: Option<(f64, f64)>,
    /// Initial number of points (a power of two).
    pub points: Option<usize>,
    pub tolerance: f64,
    pub max_doublings: usize,
    /// Location of the potential minimum.
    pub center: f64,
}

impl Default for GridOptions {
    fn default() -> Self {
        GridOptions { domain: None, points: None, tolerance: 1e-10, max_doublings: 4, center: 0.0 }
    }
}

/// Lowest eigenvalues of the `n`-point periodic Fourier-grid Hamiltonian
/// on `[a, b)`.
pub fn grid_eigenvalues(
    v: &dyn Fn(f64) -> f64,
    mass: f64,
    hbar: f64,
    domain: (f64, f64),
    n: usize,
) -> Result<Vec<f64>> {
    if n < 4 || n % 2 != 0 {
        return Err(Error::InvalidArgument(format!("grid size must be even and >= 4, got {n}")));
    }
    let (a, b) = domain;
    let len = b - a;
    let dx = len / n as f64;
    let t0 = hbar * hbar / (2.0 * mass) * (2.0 * std::f64::consts::PI / len).powi(2);
    let nf = n as f64;
    let pot: Vec<f64> = (0..n).map(|j| v(a + j as f64 * dx)).collect();
    if pot.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("potential is not finite on the grid".into()));
    }
    let m = SymMatrix::from_fn(n, |j, k| {
        if j == k {
            t0 * (nf * nf + 2.0) / 12.0 + pot[j]
        } else {
            let d = j as f64 - k as f64;
            let sign = if (j + k) % 2 == 0 { 1.0 } else { -1.0 };
            t0 * sign / (2.0 * (std::f64::consts::PI * d / nf).sin().powi(2))
        }
    });
    Ok(symmetric_eigen(&m, false)?.values)
}

/// Point beyond the turning point of `E` in direction `dir` where the WKB
/// decay exponent `int kappa dx` reaches 20.
fn decay_edge(
    v: &dyn Fn(f64) -> f64,
    mass: f64,
    hbar: f64,
    center: f64,
    energy: f64,
    dir: f64,
    step: f64,
) -> Result<f64> {
    let mut x = center;
    let mut exponent = 0.0;
    let mut prev_kappa = 0.0;
    for _ in 0..20_000_000 {
        x += dir * step;
        let excess = v(x) - energy;
        let kappa = if excess > 0.0 { (2.0 * mass * excess).sqrt() / hbar } else { 0.0 };
        exponent += 0.5 * (kappa + prev_kappa) * step;
        prev_kappa = kappa;
        if exponent >= 20.0 {
            return Ok(x);
        }
    }
    Err(Error::OracleDiverged(format!("potential does not confine energy {energy} near x = {center}")))
}

fn auto_domain(v: &dyn Fn(f64) -> f64, mass: f64, hbar: f64, center: f64, energy: f64) -> Result<(f64, f64)> {
    let v0 = v(center);
    let span = (2.0 * (energy - v0).max(hbar) / mass).sqrt().max(hbar.sqrt());
    let step = span / 4000.0;
    let lo = decay_edge(v, mass, hbar, center, energy, -1.0, step)?;
    let hi = decay_edge(v, mass, hbar, center, energy, 1.0, step)?;
    Ok((lo, hi))
}

fn points_for(len: f64, mass: f64, hbar: f64, spread: f64) -> usize {
    // grid momentum cutoff pi hbar / dx above the classical maximum
    let pmax = (2.0 * mass * spread.max(hbar)).sqrt();
    let dx = std::f64::consts::PI * hbar / (1.5 * pmax);
    ((len / dx).ceil() as usize).next_power_of_two().max(32)
}

/// The `k` lowest levels, doubling the grid until they change by less than
/// the tolerance.
pub fn grid_spectrum(
    v: &dyn Fn(f64) -> f64,
    mass: f64,
    hbar: f64,
    k: usize,
    opts: &GridOptions,
) -> Result<OracleSpectrum> {
    if k == 0 {
        return Err(Error::InvalidArgument("at least one level must be requested".into()));
    }
    if !(mass > 0.0 && hbar > 0.0) {
        return Err(Error::InvalidArgument("mass and hbar must be positive".into()));
    }
    let c = opts.center;
    let v0 = v(c);
    let h = 1e-4 * c.abs().max(1.0);
    let curv = ((v(c + h) - 2.0 * v0 + v(c - h)) / (h * h)).max(1e-6);
    let omega = (curv / mass).sqrt();
    let mut top = v0 + 1.5 * (k as f64 + 0.5) * hbar * omega;
    let mut domain = match opts.domain {
        Some(d) => d,
        None => auto_domain(v, mass, hbar, c, top)?,
    };
    let mut n = opts.points.unwrap_or_else(|| points_for(domain.1 - domain.0, mass, hbar, top - v0));
    if !n.is_power_of_two() {
        return Err(Error::InvalidArgument(format!("grid size must be a power of two, got {n}")));
    }
    // settle the box on the computed top level
    let mut coarse = grid_eigenvalues(v, mass, hbar, domain, n)?;
    if coarse.len() < k {
        return Err(Error::InvalidArgument(format!("grid of {n} points cannot give {k} levels")));
    }
    if opts.domain.is_none() {
        for _ in 0..8 {
            let needed = auto_domain(v, mass, hbar, c, coarse[k - 1].max(top))?;
            if needed.0 >= domain.0 && needed.1 <= domain.1 {
                break;
            }
            top = coarse[k - 1].max(top);
            domain = (needed.0.min(domain.0), needed.1.max(domain.1));
            if opts.points.is_none() {
                n = n.max(points_for(domain.1 - domain.0, mass, hbar, top - v0));
            }
            coarse = grid_eigenvalues(v, mass, hbar, domain, n)?;
        }
    }
    let mut history = Vec::new();
    for doubling in 0..=opts.max_doublings {
        let fine = grid_eigenvalues(v, mass, hbar, domain, 2 * n)?;
        let change = max_change(&coarse[..k], &fine[..k]);
        history.push(change);
        if change <= opts.tolerance {
            let estimates = coarse[..k].iter().zip(&fine[..k]).map(|(a, b)| (a - b).abs()).collect();
            return Ok(OracleSpectrum {
                method: "grid".into(),
                hbar,
                eigenvalues: fine[..k].to_vec(),
                estimates,
                size: 2 * n,
                domain: Some(domain),
                doublings: doubling + 1,
                history,
                negated: false,
            });
        }
        n *= 2;
        coarse = fine;
    }
    Err(Error::OracleDiverged(format!(
        "grid levels still changing by {:e} after {} doublings",
        history.last().copied().unwrap_or(f64::NAN),
        opts.max_doublings
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_levels() {
        let s = grid_spectrum(&|x: f64| 0.5 * x * x, 1.0, 1.0, 10, &GridOptions::default()).unwrap();
        for (n, e) in s.eigenvalues.iter().enumerate() {
            assert!((e - (n as f64 + 0.5)).abs() < 1e-9, "{n}: {e}");
        }
        assert!(s.estimates.iter().all(|e| *e <= 1e-10));
    }

    #[test]
    fn quartic_ground_state_above_harmonic() {
        let s = grid_spectrum(&|x: f64| 0.5 * x * x + 0.1 * x.powi(4), 1.0, 1.0, 3, &GridOptions::default()).unwrap();
        assert!(s.eigenvalues[0] > 0.5);
        // known value of the anharmonic oscillator ground state
        assert!((s.eigenvalues[0] - 0.559146327183519).abs() < 1e-9, "{}", s.eigenvalues[0]);
    }

    #[test]
    fn mass_and_offset() {
        let opts = GridOptions { center: 2.0, ..GridOptions::default() };
        let s = grid_spectrum(&|x: f64| 2.0 * (x - 2.0).powi(2), 4.0, 0.5, 4, &opts).unwrap();
        // omega = sqrt(4 / 4) = 1
        for (n, e) in s.eigenvalues.iter().enumerate() {
            assert!((e - 0.5 * (n as f64 + 0.5)).abs() < 1e-9);
        }
    }

    #[test]
    fn fixed_tiny_grid_diverges() {
        let opts =
            GridOptions { points: Some(8), max_doublings: 1, domain: Some((-6.0, 6.0)), ..GridOptions::default() };
        assert!(matches!(grid_spectrum(&|x: f64| 0.5 * x * x, 1.0, 0.05, 4, &opts), Err(Error::OracleDiverged(_))));
    }
}
