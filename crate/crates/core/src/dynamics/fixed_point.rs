use serde::Serialize;

use super::SmoothHamiltonian;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Classification {
    GenericMinimum,
    GenericMaximum,
    Saddle,
    NonGeneric,
}

#[derive(Clone, Debug, Serialize)]
pub struct FixedPointReport {
    pub x: f64,
    pub p: f64,
    pub energy: f64,
    pub classification: Classification,
    pub hessian: [[f64; 2]; 2],
    pub hessian_det: f64,
    /// Eigenvalues of the Hessian, descending.
    pub eigenvalues: [f64; 2],
    pub iterations: usize,
}

impl FixedPointReport {
    /// Errors unless the fixed point is a generic extremum.
    pub fn ensure_extremum(&self) -> Result<&Self> {
        match self.classification {
            Classification::GenericMinimum | Classification::GenericMaximum => Ok(self),
            Classification::NonGeneric => Err(Error::NonGeneric { x: self.x, p: self.p, det: self.hessian_det }),
            Classification::Saddle => Err(Error::Saddle { x: self.x, p: self.p }),
        }
    }

    /// True when the caller should work with `-H` instead.
    pub fn needs_negation(&self) -> bool {
        self.classification == Classification::GenericMaximum
    }

    /// The same fixed point seen as a critical point of `-H`.
    pub fn negated(&self) -> Self {
        let mut out = self.clone();
        out.energy = -self.energy;
        out.hessian = [[-self.hessian[0][0], -self.hessian[0][1]], [-self.hessian[1][0], -self.hessian[1][1]]];
        out.eigenvalues = [-self.eigenvalues[1], -self.eigenvalues[0]];
        out.classification = match self.classification {
            Classification::GenericMinimum => Classification::GenericMaximum,
            Classification::GenericMaximum => Classification::GenericMinimum,
            c => c,
        };
        out
    }
}

pub(crate) fn sym_eigen2(q: &[[f64; 2]; 2]) -> ([f64; 2], [[f64; 2]; 2]) {
    let (a, b, d) = (q[0][0], 0.5 * (q[0][1] + q[1][0]), q[1][1]);
    let mean = 0.5 * (a + d);
    let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
    let (l1, l2) = (mean + rad, mean - rad);
    // eigenvector for l1
    let v1 = if b.abs() > 0.0 {
        let (vx, vy) = (l1 - d, b);
        let n = vx.hypot(vy);
        [vx / n, vy / n]
    } else if a >= d {
        [1.0, 0.0]
    } else {
        [0.0, 1.0]
    };
    let v2 = [-v1[1], v1[0]];
    ([l1, l2], [v1, v2])
}

fn classify(q: &[[f64; 2]; 2]) -> (Classification, f64, [f64; 2]) {
    let det = q[0][0] * q[1][1] - q[0][1] * q[1][0];
    let scale = q.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let (ev, _) = sym_eigen2(q);
    let class = if scale == 0.0 || det.abs() < 1e-10 * scale * scale {
        Classification::NonGeneric
    } else if det < 0.0 {
        Classification::Saddle
    } else if q[0][0] + q[1][1] > 0.0 {
        Classification::GenericMinimum
    } else {
        Classification::GenericMaximum
    };
    (class, det, ev)
}

/// Newton iteration on the gradient starting from `guess`.
pub fn find_fixed_point(h: &SmoothHamiltonian, guess: (f64, f64)) -> Result<FixedPointReport> {
    let (mut x, mut p) = guess;
    let max_iter = 100;
    for it in 0..max_iter {
        let g = h.gradient(x, p);
        if !g[0].is_finite() || !g[1].is_finite() {
            return Err(Error::NoFixedPoint(format!("gradient not finite at ({x}, {p})")));
        }
        let q = h.hessian(x, p);
        let det = q[0][0] * q[1][1] - q[0][1] * q[1][0];
        let gnorm = g[0].hypot(g[1]);
        let scale = 1.0 + x.hypot(p);
        if gnorm == 0.0 {
            return Ok(report(h, x, p, it));
        }
        if det == 0.0 {
            if gnorm < 1e-12 * scale {
                return Ok(report(h, x, p, it));
            }
            return Err(Error::NoFixedPoint(format!("singular Hessian at ({x}, {p})")));
        }
        let dx = (q[1][1] * g[0] - q[0][1] * g[1]) / det;
        let dp = (-q[1][0] * g[0] + q[0][0] * g[1]) / det;
        x -= dx;
        p -= dp;
        // the step test drives degenerate (linearly converging) cases far
        // enough to expose the vanishing Hessian determinant
        if gnorm < 1e-12 * scale && dx.hypot(dp) <= 1e-12 * scale {
            return Ok(report(h, x, p, it + 1));
        }
    }
    Err(Error::NoFixedPoint(format!(
        "Newton iteration did not converge in {max_iter} steps from ({}, {})",
        guess.0, guess.1
    )))
}

fn report(h: &SmoothHamiltonian, x: f64, p: f64, iterations: usize) -> FixedPointReport {
    let q = h.hessian(x, p);
    let (classification, det, eigenvalues) = classify(&q);
    FixedPointReport {
        x,
        p,
        energy: h.value(x, p),
        classification,
        hessian: q,
        hessian_det: det,
        eigenvalues,
        iterations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polysym::parse_expr;

    fn sym(s: &str) -> SmoothHamiltonian {
        SmoothHamiltonian::from_symbol(&parse_expr(s).unwrap(), 1.0).unwrap()
    }

    #[test]
    fn harmonic_minimum() {
        let r = find_fixed_point(&sym("I"), (0.3, -0.2)).unwrap();
        assert!(r.x.abs() < 1e-14 && r.p.abs() < 1e-14);
        assert_eq!(r.classification, Classification::GenericMinimum);
    }

    #[test]
    fn shifted_minimum() {
        let r = find_fixed_point(&sym("p^2/2 + (x-1)^2/2"), (0.0, 0.0)).unwrap();
        assert!((r.x - 1.0).abs() < 1e-14 && r.p.abs() < 1e-14);
        assert_eq!(r.classification, Classification::GenericMinimum);
    }

    #[test]
    fn quartic_is_non_generic() {
        let r = find_fixed_point(&sym("p^2/2 + x^4"), (0.1, 0.0)).unwrap();
        assert!(r.x.abs() < 1e-6);
        assert_eq!(r.classification, Classification::NonGeneric);
        assert!(matches!(r.ensure_extremum(), Err(Error::NonGeneric { .. })));
    }

    #[test]
    fn maximum_and_saddle() {
        let r = find_fixed_point(&sym("-I"), (0.2, 0.1)).unwrap();
        assert_eq!(r.classification, Classification::GenericMaximum);
        assert!(r.needs_negation());
        assert_eq!(r.negated().classification, Classification::GenericMinimum);
        let s = find_fixed_point(&sym("x*p"), (0.2, 0.1)).unwrap();
        assert_eq!(s.classification, Classification::Saddle);
    }

    #[test]
    fn no_fixed_point() {
        let h = SmoothHamiltonian::from_fn(|x, p| x + p * p);
        assert!(matches!(find_fixed_point(&h, (0.0, 0.0)), Err(Error::NoFixedPoint(_))));
    }
}
