use std::fmt;
use std::sync::Arc;

#[cfg(test)]
use crate::error::Error;
use crate::error::Result;
use crate::moyal::poisson;
use crate::normalform::LinearSymplectic;
use crate::polysym::{NumericSymbol, PolySymbol};

pub type ValueFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
pub type GradientFn = Arc<dyn Fn(f64, f64) -> [f64; 2] + Send + Sync>;
pub type HessianFn = Arc<dyn Fn(f64, f64) -> [[f64; 2]; 2] + Send + Sync>;
/// Mixed partial `d^nx/dx^nx d^np/dp^np` at `(x, p)`.
pub type PartialFn = Arc<dyn Fn(u32, u32, f64, f64) -> f64 + Send + Sync>;

/// Whether the function is the principal symbol alone or the full
/// hbar-dependent symbol evaluated at a fixed hbar.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
pub enum SymbolKind {
    Principal,
    Full,
}

/// An evaluatable phase-space function `H(x, p)`.
///
/// Missing gradient and Hessian callbacks fall back to central differences
/// with steps `eps^(1/3)` and `eps^(1/4)` times `max(1, |coordinate|)`.
#[derive(Clone)]
pub struct SmoothHamiltonian {
    value: ValueFn,
    gradient: Option<GradientFn>,
    hessian: Option<HessianFn>,
    partials: Option<PartialFn>,
    rotation_invariant: bool,
    pub kind: SymbolKind,
}

impl fmt::Debug for SmoothHamiltonian {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SmoothHamiltonian")
            .field("gradient", &self.gradient.is_some())
            .field("hessian", &self.hessian.is_some())
            .field("partials", &self.partials.is_some())
            .field("kind", &self.kind)
            .finish()
    }
}

impl SmoothHamiltonian {
    pub fn from_fn<F>(value: F) -> Self
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        SmoothHamiltonian {
            value: Arc::new(value),
            gradient: None,
            hessian: None,
            partials: None,
            rotation_invariant: false,
            kind: SymbolKind::Principal,
        }
    }

    pub fn with_gradient<F>(mut self, g: F) -> Self
    where
        F: Fn(f64, f64) -> [f64; 2] + Send + Sync + 'static,
    {
        self.gradient = Some(Arc::new(g));
        self
    }

    pub fn with_hessian<F>(mut self, h: F) -> Self
    where
        F: Fn(f64, f64) -> [[f64; 2]; 2] + Send + Sync + 'static,
    {
        self.hessian = Some(Arc::new(h));
        self
    }

    pub fn with_partials<F>(mut self, d: F) -> Self
    where
        F: Fn(u32, u32, f64, f64) -> f64 + Send + Sync + 'static,
    {
        self.partials = Some(Arc::new(d));
        self
    }

    pub fn with_kind(mut self, kind: SymbolKind) -> Self {
        self.kind = kind;
        self
    }

    /// The full symbol at the given hbar, with exact derivative tables.
    pub fn from_symbol(sym: &PolySymbol, hbar: f64) -> Result<Self> {
        let num = Arc::new(NumericSymbol::new(sym, hbar)?);
        let rotation_invariant = poisson(num.exact(), &PolySymbol::action()).is_zero();
        let (v, g, h, d) = (num.clone(), num.clone(), num.clone(), num);
        let kind = if sym.hbar_order() > 0 { SymbolKind::Full } else { SymbolKind::Principal };
        let mut out = SmoothHamiltonian::from_fn(move |x, p| v.value(x, p))
            .with_gradient(move |x, p| g.gradient(x, p))
            .with_hessian(move |x, p| h.hessian(x, p))
            .with_partials(move |nx, np, x, p| d.partial(nx, np, x, p))
            .with_kind(kind);
        out.rotation_invariant = rotation_invariant;
        Ok(out)
    }

    /// True for symbols known to be functions of `I = (x^2 + p^2)/2` alone.
    /// Their level sets are circles about the origin even when the
    /// Hessian there vanishes.
    pub fn is_rotation_invariant(&self) -> bool {
        self.rotation_invariant
    }

    /// `p^2 / 2m + V(x)` from a potential and its first two derivatives.
    pub fn kinetic_potential<V, D1, D2>(mass: f64, v: V, dv: D1, d2v: D2) -> Self
    where
        V: Fn(f64) -> f64 + Send + Sync + 'static,
        D1: Fn(f64) -> f64 + Send + Sync + 'static,
        D2: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        SmoothHamiltonian::from_fn(move |x, p| p * p / (2.0 * mass) + v(x))
            .with_gradient(move |x, p| [dv(x), p / mass])
            .with_hessian(move |x, _p| [[d2v(x), 0.0], [0.0, 1.0 / mass]])
    }

    pub fn value(&self, x: f64, p: f64) -> f64 {
        (self.value)(x, p)
    }

    pub fn gradient(&self, x: f64, p: f64) -> [f64; 2] {
        if let Some(g) = &self.gradient {
            return g(x, p);
        }
        let hx = f64::EPSILON.cbrt() * x.abs().max(1.0);
        let hp = f64::EPSILON.cbrt() * p.abs().max(1.0);
        [
            (self.value(x + hx, p) - self.value(x - hx, p)) / (2.0 * hx),
            (self.value(x, p + hp) - self.value(x, p - hp)) / (2.0 * hp),
        ]
    }

    pub fn hessian(&self, x: f64, p: f64) -> [[f64; 2]; 2] {
        if let Some(h) = &self.hessian {
            return h(x, p);
        }
        let hx = f64::EPSILON.powf(0.25) * x.abs().max(1.0);
        let hp = f64::EPSILON.powf(0.25) * p.abs().max(1.0);
        let f = |a: f64, b: f64| self.value(a, b);
        let f0 = f(x, p);
        let fxx = (f(x + hx, p) - 2.0 * f0 + f(x - hx, p)) / (hx * hx);
        let fpp = (f(x, p + hp) - 2.0 * f0 + f(x, p - hp)) / (hp * hp);
        let fxp = (f(x + hx, p + hp) - f(x + hx, p - hp) - f(x - hx, p + hp) + f(x - hx, p - hp)) / (4.0 * hx * hp);
        [[fxx, fxp], [fxp, fpp]]
    }

    /// Analytic mixed partial when a callback is available. Orders one and
    /// two also use the gradient and Hessian callbacks.
    pub fn partial(&self, nx: u32, np: u32, x: f64, p: f64) -> Option<f64> {
        if let Some(d) = &self.partials {
            return Some(d(nx, np, x, p));
        }
        match (nx, np) {
            (0, 0) => Some(self.value(x, p)),
            (1, 0) => self.gradient.as_ref().map(|g| g(x, p)[0]),
            (0, 1) => self.gradient.as_ref().map(|g| g(x, p)[1]),
            (2, 0) => self.hessian.as_ref().map(|h| h(x, p)[0][0]),
            (1, 1) => self.hessian.as_ref().map(|h| h(x, p)[0][1]),
            (0, 2) => self.hessian.as_ref().map(|h| h(x, p)[1][1]),
            _ => None,
        }
    }

    /// `{H, H}_2 = 2 (H_xx H_pp - H_xp^2)` at a point.
    pub fn hessian_bracket(&self, x: f64, p: f64) -> f64 {
        let h = self.hessian(x, p);
        2.0 * (h[0][0] * h[1][1] - h[0][1] * h[1][0])
    }

    pub fn negated(&self) -> Self {
        let v = self.value.clone();
        let mut out = SmoothHamiltonian::from_fn(move |x, p| -v(x, p)).with_kind(self.kind);
        if let Some(g) = self.gradient.clone() {
            out = out.with_gradient(move |x, p| {
                let d = g(x, p);
                [-d[0], -d[1]]
            });
        }
        if let Some(h) = self.hessian.clone() {
            out = out.with_hessian(move |x, p| {
                let m = h(x, p);
                [[-m[0][0], -m[0][1]], [-m[1][0], -m[1][1]]]
            });
        }
        if let Some(d) = self.partials.clone() {
            out = out.with_partials(move |a, b, x, p| -d(a, b, x, p));
        }
        out.rotation_invariant = self.rotation_invariant;
        out
    }

    /// `H o S`, with the gradient and Hessian carried through the chain
    /// rule. Higher analytic partials are not transformed.
    pub fn apply_linear_symplectic(&self, s: &LinearSymplectic) -> Result<Self> {
        s.check()?;
        let m = s.matrix();
        let map = move |x: f64, p: f64| (m[0][0] * x + m[0][1] * p, m[1][0] * x + m[1][1] * p);
        let v = self.value.clone();
        let mut out = SmoothHamiltonian::from_fn(move |x, p| {
            let (a, b) = map(x, p);
            v(a, b)
        })
        .with_kind(self.kind);
        if let Some(g) = self.gradient.clone() {
            out = out.with_gradient(move |x, p| {
                let (a, b) = map(x, p);
                let d = g(a, b);
                [m[0][0] * d[0] + m[1][0] * d[1], m[0][1] * d[0] + m[1][1] * d[1]]
            });
        }
        if let Some(h) = self.hessian.clone() {
            out = out.with_hessian(move |x, p| {
                let (a, b) = map(x, p);
                let q = h(a, b);
                // S^T Q S
                let mut r = [[0.0; 2]; 2];
                for (i, row) in r.iter_mut().enumerate() {
                    for (j, cell) in row.iter_mut().enumerate() {
                        *cell = (0..2).map(|k| (0..2).map(|l| m[k][i] * q[k][l] * m[l][j]).sum::<f64>()).sum();
                    }
                }
                r
            });
        }
        Ok(out)
    }
}

/// Checks `det S = 1` and returns the transformed symbol `P o S`.
pub fn apply_linear_symplectic_symbol(sym: &PolySymbol, s: &LinearSymplectic) -> Result<PolySymbol> {
    s.check()?;
    let m = s.matrix();
    let r = |v: f64| crate::polysym::rational_from_f64(v);
    let exact = [[r(m[0][0])?, r(m[0][1])?], [r(m[1][0])?, r(m[1][1])?]];
    Ok(sym.compose_linear(&exact))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polysym::parse_expr;

    #[test]
    fn finite_difference_fallbacks() {
        let h = SmoothHamiltonian::from_fn(|x, p| p * p / 2.0 + x.powi(4) + x * p);
        let g = h.gradient(0.3, -0.7);
        assert!((g[0] - (4.0 * 0.027 - 0.7)).abs() < 1e-9);
        assert!((g[1] - (-0.7 + 0.3)).abs() < 1e-9);
        let q = h.hessian(0.3, -0.7);
        assert!((q[0][0] - 12.0 * 0.09).abs() < 1e-6);
        assert!((q[0][1] - 1.0).abs() < 1e-6);
        assert!(h.partial(3, 0, 0.0, 0.0).is_none());
    }

    #[test]
    fn symbol_backed_partials_are_exact() {
        let h = SmoothHamiltonian::from_symbol(&parse_expr("p^2/2 + x^2/2 + x^4").unwrap(), 1.0).unwrap();
        assert_eq!(h.partial(4, 0, 0.0, 0.0), Some(24.0));
        assert_eq!(h.hessian_bracket(0.0, 0.0), 2.0);
    }

    #[test]
    fn linear_map_chain_rule() {
        let h = SmoothHamiltonian::from_symbol(&parse_expr("p^2/2 + x^2/2 + x^3").unwrap(), 1.0).unwrap();
        let s = LinearSymplectic::new([[2.0, 0.5], [0.0, 0.5]]).unwrap();
        let hs = h.apply_linear_symplectic(&s).unwrap();
        let sym = apply_linear_symplectic_symbol(&parse_expr("p^2/2 + x^2/2 + x^3").unwrap(), &s).unwrap();
        let hs2 = SmoothHamiltonian::from_symbol(&sym, 1.0).unwrap();
        for &(x, p) in &[(0.1, 0.2), (-0.4, 0.3)] {
            assert!((hs.value(x, p) - hs2.value(x, p)).abs() < 1e-14);
            let (g1, g2) = (hs.gradient(x, p), hs2.gradient(x, p));
            assert!((g1[0] - g2[0]).abs() < 1e-13 && (g1[1] - g2[1]).abs() < 1e-13);
            let (q1, q2) = (hs.hessian(x, p), hs2.hessian(x, p));
            for i in 0..2 {
                for j in 0..2 {
                    assert!((q1[i][j] - q2[i][j]).abs() < 1e-13);
                }
            }
            // {H,H}_2 is invariant under linear canonical maps
            let (a, b) = (2.0 * x + 0.5 * p, 0.5 * p);
            assert!((hs.hessian_bracket(x, p) - h.hessian_bracket(a, b)).abs() < 1e-12);
        }
        let bad = LinearSymplectic::new([[2.0, 0.0], [0.0, 1.0]]);
        assert!(matches!(bad, Err(Error::NotSymplectic(_))));
    }
}
