//! Classical Birkhoff normal form near an elliptic fixed point.
//!
//! The quadratic part is first made round by a linear symplectic map. The
//! remaining terms are written in the complex coordinates `xi = x + ip`,
//! `eta = x - ip` (so `I = xi eta / 2` and `{xi, eta} = -2i`) and the
//! angle-dependent monomials `xi^a eta^b`, `a != b`, are removed degree by
//! degree with Lie-series generators. In one degree of freedom the divisors
//! `a1 (a - b)` never vanish. What remains is `sum_k a_k I^k`.

use std::collections::BTreeMap;
use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;

use crate::catalog::HamiltonianModel;
use crate::dynamics::{find_fixed_point, fixed_point_eigen, Classification, FixedPointReport};
use crate::error::{Error, Result};
use crate::polysym::{rational_from_f64, taylor_from_callable, to_f64, Coeff, Exponent, PolySymbol, Rational};

/// A 2x2 real matrix with unit determinant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LinearSymplectic {
    m: [[f64; 2]; 2],
}

impl LinearSymplectic {
    pub fn new(m: [[f64; 2]; 2]) -> Result<Self> {
        let s = LinearSymplectic { m };
        s.check()?;
        Ok(s)
    }

    pub fn identity() -> Self {
        LinearSymplectic { m: [[1.0, 0.0], [0.0, 1.0]] }
    }

    /// `R(a) diag(s, 1/s) R(b)` with rotations `R`.
    pub fn from_rotation_squeeze(a: f64, s: f64, b: f64) -> Result<Self> {
        let rot = |t: f64| {
            let (sn, c) = t.sin_cos();
            [[c, -sn], [sn, c]]
        };
        let mul = |x: [[f64; 2]; 2], y: [[f64; 2]; 2]| {
            let mut r = [[0.0; 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    r[i][j] = x[i][0] * y[0][j] + x[i][1] * y[1][j];
                }
            }
            r
        };
        LinearSymplectic::new(mul(mul(rot(a), [[s, 0.0], [0.0, 1.0 / s]]), rot(b)))
    }

    pub fn matrix(&self) -> [[f64; 2]; 2] {
        self.m
    }

    pub fn det(&self) -> f64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    pub fn check(&self) -> Result<()> {
        let d = self.det();
        if (d - 1.0).abs() > 1e-12 || !d.is_finite() {
            return Err(Error::NotSymplectic(d));
        }
        Ok(())
    }

    pub fn inverse(&self) -> Self {
        let m = self.m;
        LinearSymplectic { m: [[m[1][1], -m[0][1]], [-m[1][0], m[0][0]]] }
    }

    pub fn is_identity(&self) -> bool {
        self.m == [[1.0, 0.0], [0.0, 1.0]]
    }
}

/// `f0(A) = a1 A + a2 A^2 + ... + aN A^N`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ActionSeries {
    pub coefficients: Vec<f64>,
    /// Exact coefficients when the whole computation ran over the rationals.
    #[serde(serialize_with = "serialize_exact")]
    pub exact: Option<Vec<Rational>>,
}

fn serialize_exact<S: serde::Serializer>(v: &Option<Vec<Rational>>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        None => s.serialize_none(),
        Some(list) => {
            let strs: Vec<String> = list.iter().map(|r| format!("{}/{}", r.numer(), r.denom())).collect();
            s.serialize_some(&strs)
        }
    }
}

impl ActionSeries {
    pub fn order(&self) -> usize {
        self.coefficients.len()
    }

    pub fn eval(&self, action: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, c| (acc + c) * action)
    }

    /// `d f0 / dA`.
    pub fn frequency(&self, action: f64) -> f64 {
        self.coefficients.iter().enumerate().rev().fold(0.0, |acc, (k, c)| acc * action + (k as f64 + 1.0) * c)
    }
}

/// Field operations needed by the elimination.
pub trait Scalar:
    Clone
    + Debug
    + PartialEq
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn zero() -> Self;
    fn one() -> Self;
    fn from_int(v: i64) -> Self;
    fn is_zero(&self) -> bool;
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_int(v: i64) -> Self {
        v as f64
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
}

impl Scalar for Rational {
    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        One::one()
    }
    fn from_int(v: i64) -> Self {
        Rational::from_integer(BigInt::from(v))
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Cx<T> {
    re: T,
    im: T,
}

impl<T: Scalar> Cx<T> {
    fn new(re: T, im: T) -> Self {
        Cx { re, im }
    }
    fn zero() -> Self {
        Cx::new(T::zero(), T::zero())
    }
    fn is_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }
    fn add(&self, o: &Self) -> Self {
        Cx::new(self.re.clone() + o.re.clone(), self.im.clone() + o.im.clone())
    }
    fn mul(&self, o: &Self) -> Self {
        Cx::new(
            self.re.clone() * o.re.clone() - self.im.clone() * o.im.clone(),
            self.re.clone() * o.im.clone() + self.im.clone() * o.re.clone(),
        )
    }
    fn scale(&self, s: &T) -> Self {
        Cx::new(self.re.clone() * s.clone(), self.im.clone() * s.clone())
    }
    fn div(&self, o: &Self) -> Self {
        let den = o.re.clone() * o.re.clone() + o.im.clone() * o.im.clone();
        let num = self.mul(&Cx::new(o.re.clone(), -o.im.clone()));
        Cx::new(num.re / den.clone(), num.im / den)
    }
}

/// Polynomial in `(xi, eta)` truncated at a maximum total degree.
#[derive(Clone, Debug)]
struct CPoly<T> {
    terms: BTreeMap<(u32, u32), Cx<T>>,
    max_degree: u32,
}

impl<T: Scalar> CPoly<T> {
    fn new(max_degree: u32) -> Self {
        CPoly { terms: BTreeMap::new(), max_degree }
    }

    fn add_term(&mut self, k: (u32, u32), c: Cx<T>) {
        if k.0 + k.1 > self.max_degree || c.is_zero() {
            return;
        }
        let entry = self.terms.entry(k).or_insert_with(Cx::zero);
        *entry = entry.add(&c);
        if entry.is_zero() {
            self.terms.remove(&k);
        }
    }

    fn add(&mut self, o: &Self) {
        for (k, c) in &o.terms {
            self.add_term(*k, c.clone());
        }
    }

    fn mul(&self, o: &Self) -> Self {
        let mut out = CPoly::new(self.max_degree);
        for (ka, ca) in &self.terms {
            for (kb, cb) in &o.terms {
                out.add_term((ka.0 + kb.0, ka.1 + kb.1), ca.mul(cb));
            }
        }
        out
    }

    fn scale(&self, s: &Cx<T>) -> Self {
        let mut out = CPoly::new(self.max_degree);
        for (k, c) in &self.terms {
            out.add_term(*k, c.mul(s));
        }
        out
    }

    fn derive(&self, wrt_xi: bool) -> Self {
        let mut out = CPoly::new(self.max_degree);
        for (&(a, b), c) in &self.terms {
            let (pw, k) = if wrt_xi { (a, (a.wrapping_sub(1), b)) } else { (b, (a, b.wrapping_sub(1))) };
            if pw > 0 {
                out.add_term(k, c.scale(&T::from_int(pw as i64)));
            }
        }
        out
    }

    /// `{F, G} = -2i (F_xi G_eta - F_eta G_xi)` for `{x, p} = 1`.
    fn poisson(&self, o: &Self) -> Self {
        let mut t = self.derive(true).mul(&o.derive(false));
        let u = self.derive(false).mul(&o.derive(true));
        t.add(&u.scale(&Cx::new(-T::one(), T::zero())));
        t.scale(&Cx::new(T::zero(), T::from_int(-2)))
    }

    fn homogeneous(&self, d: u32) -> Vec<((u32, u32), Cx<T>)> {
        self.terms.iter().filter(|(k, _)| k.0 + k.1 == d).map(|(k, c)| (*k, c.clone())).collect()
    }
}

/// Real `(x, p)` polynomial coefficients to `(xi, eta)` form using
/// `x = (xi + eta)/2`, `p = -i (xi - eta)/2`.
fn to_complex_coords<T: Scalar>(terms: &[((u32, u32), T)], max_degree: u32) -> CPoly<T> {
    let half = T::one() / T::from_int(2);
    let mut xs = CPoly::new(max_degree);
    xs.add_term((1, 0), Cx::new(half.clone(), T::zero()));
    xs.add_term((0, 1), Cx::new(half.clone(), T::zero()));
    let mut ps = CPoly::new(max_degree);
    ps.add_term((1, 0), Cx::new(T::zero(), -half.clone()));
    ps.add_term((0, 1), Cx::new(T::zero(), half));
    let mut one = CPoly::new(max_degree);
    one.add_term((0, 0), Cx::new(T::one(), T::zero()));
    let mut xpow = vec![one.clone()];
    let mut ppow = vec![one];
    let mut out = CPoly::new(max_degree);
    for ((i, j), c) in terms {
        while xpow.len() <= *i as usize {
            let next = xpow.last().unwrap().mul(&xs);
            xpow.push(next);
        }
        while ppow.len() <= *j as usize {
            let next = ppow.last().unwrap().mul(&ps);
            ppow.push(next);
        }
        let term = xpow[*i as usize].mul(&ppow[*j as usize]).scale(&Cx::new(c.clone(), T::zero()));
        out.add(&term);
    }
    out
}

/// Runs the elimination on a symbol whose quadratic part is `a1 I`.
fn eliminate<T: Scalar>(terms: &[((u32, u32), T)], order: u32) -> Result<Vec<T>> {
    let max_degree = 2 * order;
    let mut h = to_complex_coords(terms, max_degree);
    let h11 = h.terms.get(&(1, 1)).cloned().unwrap_or_else(Cx::zero);
    let a1 = h11.re.clone() * T::from_int(2);
    if a1.is_zero() {
        return Err(Error::NonElliptic("vanishing quadratic part".into()));
    }
    for d in 3..=max_degree {
        let mut w = CPoly::new(max_degree);
        for ((a, b), c) in h.homogeneous(d) {
            if a == b {
                continue;
            }
            // w_ab = i h_ab / (a1 (a - b))
            let div = Cx::new(a1.clone() * T::from_int(a as i64 - b as i64), T::zero());
            w.add_term((a, b), c.mul(&Cx::new(T::zero(), T::one())).div(&div));
        }
        if w.terms.is_empty() {
            continue;
        }
        // H <- exp(ad) H with ad F = {F, W}
        let mut total = h.clone();
        let mut term = h.clone();
        let mut j = 1i64;
        loop {
            term = term.poisson(&w).scale(&Cx::new(T::one() / T::from_int(j), T::zero()));
            if term.terms.is_empty() {
                break;
            }
            total.add(&term);
            j += 1;
        }
        h = total;
    }
    let mut out = Vec::with_capacity(order as usize);
    for k in 1..=order {
        let c = h.terms.get(&(k, k)).cloned().unwrap_or_else(Cx::zero);
        // (xi eta)^k = (2 I)^k
        let two_k = (0..k).fold(T::one(), |acc, _| acc * T::from_int(2));
        out.push(c.re * two_k);
    }
    Ok(out)
}

fn quadratic_form(p: &PolySymbol) -> [[f64; 2]; 2] {
    let c = |i, j| to_f64(&p.coeff(i, j, 0).re);
    [[2.0 * c(2, 0), c(1, 1)], [c(1, 1), 2.0 * c(0, 2)]]
}

fn check_no_low_terms(p: &PolySymbol) -> Result<()> {
    for (e, _) in p.terms() {
        if e.degree() < 2 {
            return Err(Error::InvalidArgument("normal form input must have zero constant and linear parts".into()));
        }
    }
    if !p.is_real() {
        return Err(Error::InvalidArgument("normal form input must be real".into()));
    }
    Ok(())
}

/// Linear symplectic `S` with `(P o S)_2 = a1 (x^2 + p^2)/2`, `a1 = sqrt(det Q)`.
///
/// `S = R diag(sqrt(a1/l1), sqrt(a1/l2))` for `Q = R diag(l1, l2) R^T`, with
/// `R` the rotation of smallest angle. The quadratic part of the returned
/// symbol is set to its exact normal form; rounding of `S` would otherwise
/// leave cross terms of relative size 1e-16.
pub fn normalize_quadratic(p: &PolySymbol) -> Result<(LinearSymplectic, PolySymbol)> {
    let p = p.principal();
    check_no_low_terms(&p)?;
    let q = quadratic_form(&p);
    let det = q[0][0] * q[1][1] - q[0][1] * q[1][0];
    if !(det > 0.0) || q[0][0] <= 0.0 {
        return Err(Error::NonElliptic(format!(
            "quadratic form [[{}, {}], [{}, {}]] is not positive definite",
            q[0][0], q[0][1], q[1][0], q[1][1]
        )));
    }
    let a1 = det.sqrt();
    if q[0][1] == 0.0 && q[0][0] == q[1][1] {
        return Ok((LinearSymplectic::identity(), p.clone()));
    }
    let (ev, vecs) = fixed_point_eigen(&q);
    // rotation whose first column is closest to e_x
    let mut v1 = vecs[0];
    let mut l = ev;
    if v1[0].abs() < vecs[1][0].abs() {
        v1 = vecs[1];
        l = [ev[1], ev[0]];
    }
    if v1[0] < 0.0 {
        v1 = [-v1[0], -v1[1]];
    }
    let r = [[v1[0], -v1[1]], [v1[1], v1[0]]];
    let d = [(a1 / l[0]).sqrt(), (a1 / l[1]).sqrt()];
    if !(d[0].is_finite() && d[1].is_finite()) {
        return Err(Error::NonElliptic(format!("quadratic form eigenvalues {l:?} are numerically singular")));
    }
    let s = LinearSymplectic::new([[r[0][0] * d[0], r[0][1] * d[1]], [r[1][0] * d[0], r[1][1] * d[1]]])?;
    let mut out = crate::dynamics::apply_linear_symplectic_symbol(&p, &s)?;
    let target = rational_from_f64(a1 / 2.0)?;
    for (i, j) in [(2, 0), (1, 1), (0, 2)] {
        let old = out.coeff(i, j, 0);
        out.add_term(Exponent::new(i, j, 0), -old);
    }
    out.add_term(Exponent::new(2, 0, 0), Coeff::real(target.clone()));
    out.add_term(Exponent::new(0, 2, 0), Coeff::real(target));
    Ok((s, out))
}

/// Classical normal-form coefficients `a1..a_order` of a polynomial
/// Hamiltonian expanded about its fixed point (the `hbar^0` part is used).
/// The pipeline is exact when the quadratic part is already a rational
/// multiple of `I`.
pub fn birkhoff_series(p: &PolySymbol, order: u32) -> Result<ActionSeries> {
    if order == 0 {
        return Err(Error::InvalidArgument("order must be at least 1".into()));
    }
    let p = p.principal();
    check_no_low_terms(&p)?;
    let c20 = p.coeff(2, 0, 0).re;
    let round = p.coeff(1, 1, 0).is_zero() && c20 == p.coeff(0, 2, 0).re && c20.is_positive();
    if round {
        let terms: Vec<((u32, u32), Rational)> = p.terms().map(|(e, c)| ((e.x, e.p), c.re.clone())).collect();
        let exact = eliminate::<Rational>(&terms, order)?;
        return Ok(ActionSeries {
            coefficients: exact.iter().map(|r| r.to_f64().unwrap_or(f64::NAN)).collect(),
            exact: Some(exact),
        });
    }
    let (_, normalized) = normalize_quadratic(&p)?;
    let terms: Vec<((u32, u32), f64)> = normalized.terms().map(|(e, c)| ((e.x, e.p), to_f64(&c.re))).collect();
    let coefficients = eliminate::<f64>(&terms, order)?;
    Ok(ActionSeries { coefficients, exact: None })
}

/// As [`birkhoff_series`] for a Taylor polynomial known only through
/// `valid_degree`; order `N` needs terms through degree `2N`.
pub fn birkhoff_series_truncated(p: &PolySymbol, valid_degree: u32, order: u32) -> Result<ActionSeries> {
    if valid_degree < 2 * order {
        return Err(Error::DegreeTooLow { degree: valid_degree, order });
    }
    birkhoff_series(p, order)
}

/// Normal form of a model about its fixed point.
#[derive(Clone, Debug, Serialize)]
pub struct ModelNormalForm {
    pub series: ActionSeries,
    pub fixed_point: FixedPointReport,
    /// The expansion that was normalised, in coordinates centred on the
    /// fixed point.
    #[serde(serialize_with = "serialize_symbol")]
    pub expanded: PolySymbol,
}

fn serialize_symbol<S: serde::Serializer>(p: &PolySymbol, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&p.to_text())
}

/// Polynomial symbols are translated to the (rounded) fixed point; other
/// models are Taylor expanded through degree `2 order`. Constant and linear
/// parts at the fixed point are dropped. Saddles, maxima and degenerate
/// points fail with `NonElliptic`.
pub fn model_birkhoff(model: &dyn HamiltonianModel, order: u32) -> Result<ModelNormalForm> {
    let h = model.hamiltonian(0.0)?;
    let fp = find_fixed_point(&h, model.fixed_point_guess())?;
    let kind = match fp.classification {
        Classification::GenericMinimum => None,
        Classification::GenericMaximum => Some("a maximum (normalise -H instead)"),
        Classification::Saddle => Some("a saddle"),
        Classification::NonGeneric => Some("degenerate (singular Hessian)"),
    };
    if let Some(kind) = kind {
        return Err(Error::NonElliptic(format!("fixed point at ({}, {}) is {kind}", fp.x, fp.p)));
    }
    let (expanded, valid, exact_input) = match model.symbol() {
        Some(sym) => {
            let sym = sym.principal();
            let shifted = if fp.x == 0.0 && fp.p == 0.0 {
                sym
            } else {
                sym.translate(&rational_from_f64(fp.x)?, &rational_from_f64(fp.p)?)
            };
            let degree = shifted.degree();
            (shifted, degree.max(2 * order), true)
        }
        None => (taylor_from_callable(&h, (fp.x, fp.p), 2 * order, true)?, 2 * order, false),
    };
    let expanded =
        PolySymbol::from_terms(expanded.terms().filter(|(e, _)| e.degree() >= 2).map(|(e, c)| (*e, c.clone())));
    let mut series = birkhoff_series_truncated(&expanded, valid, order)?;
    if !exact_input {
        // rationals converted from floating-point derivatives are not exact
        series.exact = None;
    }
    Ok(ModelNormalForm { series, fixed_point: fp, expanded })
}
