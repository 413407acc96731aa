//! Exact sparse polynomial phase-space symbols.
//!
//! A [`PolySymbol`] is a finite sum of monomials `c * x^i p^j hbar^k` with
//! Gaussian-rational coefficients `c`. All ring operations are exact; floating
//! point only appears in [`PolySymbol::eval`] and in [`NumericSymbol`], the
//! compiled form used by the orbit machinery.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::dynamics::SmoothHamiltonian;
use crate::error::{Error, Result};

pub type Rational = BigRational;

pub fn rat(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

pub fn rat_int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

/// Exact binary value of a finite float.
pub fn rational_from_f64(v: f64) -> Result<Rational> {
    Rational::from_float(v).ok_or_else(|| Error::InvalidArgument(format!("non-finite value {v}")))
}

/// Rational equal to the shortest decimal that round-trips to `v`, so that
/// user-facing parameters such as `0.1` become exactly `1/10`.
pub fn rational_from_decimal(v: f64) -> Result<Rational> {
    if !v.is_finite() {
        return Err(Error::InvalidArgument(format!("non-finite value {v}")));
    }
    parse_decimal(&format!("{v:e}"))
}

/// Parses `123`, `-1.25`, `3e-4`, `7/8`.
pub fn parse_rational(s: &str) -> Result<Rational> {
    let s = s.trim();
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().map_err(|_| Error::Parse(format!("bad numerator '{n}'")))?;
        let d: BigInt = d.trim().parse().map_err(|_| Error::Parse(format!("bad denominator '{d}'")))?;
        if d.is_zero() {
            return Err(Error::Parse("zero denominator".into()));
        }
        return Ok(Rational::new(n, d));
    }
    parse_decimal(s)
}

fn parse_decimal(s: &str) -> Result<Rational> {
    let bad = || Error::Parse(format!("bad number '{s}'"));
    let (mantissa, exp) = match s.find(['e', 'E']) {
        Some(pos) => (&s[..pos], s[pos + 1..].parse::<i32>().map_err(|_| bad())?),
        None => (s, 0),
    };
    let (neg, mantissa) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let digits = format!("{int_part}{frac_part}");
    let mut value = Rational::from_integer(digits.parse::<BigInt>().map_err(|_| bad())?);
    let shift = exp - frac_part.len() as i32;
    let ten = Rational::from_integer(BigInt::from(10));
    if shift >= 0 {
        value *= num_traits::pow(ten, shift as usize);
    } else {
        value /= num_traits::pow(ten, (-shift) as usize);
    }
    Ok(if neg { -value } else { value })
}

/// Gaussian rational `re + i*im`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct Coeff {
    pub re: Rational,
    pub im: Rational,
}

impl Coeff {
    pub fn real(re: Rational) -> Self {
        Coeff { re, im: Rational::zero() }
    }

    pub fn new(re: Rational, im: Rational) -> Self {
        Coeff { re, im }
    }

    pub fn i() -> Self {
        Coeff { re: Rational::zero(), im: Rational::one() }
    }

    pub fn is_real(&self) -> bool {
        self.im.is_zero()
    }

    pub fn conj(&self) -> Self {
        Coeff { re: self.re.clone(), im: -self.im.clone() }
    }

    pub fn scale(&self, s: &Rational) -> Self {
        Coeff { re: &self.re * s, im: &self.im * s }
    }

    pub fn to_complex64(&self) -> Complex64 {
        Complex64::new(to_f64(&self.re), to_f64(&self.im))
    }

    /// Integer power of `i`.
    pub fn i_pow(n: u32) -> Self {
        match n % 4 {
            0 => Coeff::one(),
            1 => Coeff::i(),
            2 => -Coeff::one(),
            _ => -Coeff::i(),
        }
    }
}

pub(crate) fn to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

impl Zero for Coeff {
    fn zero() -> Self {
        Coeff::default()
    }
    fn is_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }
}

impl One for Coeff {
    fn one() -> Self {
        Coeff::real(Rational::one())
    }
}

impl Add for Coeff {
    type Output = Coeff;
    fn add(self, o: Coeff) -> Coeff {
        Coeff { re: self.re + o.re, im: self.im + o.im }
    }
}

impl Sub for Coeff {
    type Output = Coeff;
    fn sub(self, o: Coeff) -> Coeff {
        Coeff { re: self.re - o.re, im: self.im - o.im }
    }
}

impl Mul for Coeff {
    type Output = Coeff;
    fn mul(self, o: Coeff) -> Coeff {
        &self * &o
    }
}

impl<'a> Mul<&'a Coeff> for &'a Coeff {
    type Output = Coeff;
    fn mul(self, o: &Coeff) -> Coeff {
        if self.im.is_zero() && o.im.is_zero() {
            return Coeff::real(&self.re * &o.re);
        }
        Coeff { re: &self.re * &o.re - &self.im * &o.im, im: &self.re * &o.im + &self.im * &o.re }
    }
}

impl Neg for Coeff {
    type Output = Coeff;
    fn neg(self) -> Coeff {
        Coeff { re: -self.re, im: -self.im }
    }
}

impl fmt::Display for Coeff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.im.is_zero() {
            write!(f, "{}", self.re)
        } else if self.re.is_zero() {
            write!(f, "{}*i", self.im)
        } else {
            write!(f, "({} + {}*i)", self.re, self.im)
        }
    }
}

/// Exponent triple of a monomial `x^x p^p hbar^hbar`. Ordered by
/// `(hbar, x, p)`-agnostic lexicographic order on `(x, p, hbar)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Exponent {
    pub x: u32,
    pub p: u32,
    pub hbar: u32,
}

impl Exponent {
    pub fn new(x: u32, p: u32, hbar: u32) -> Self {
        Exponent { x, p, hbar }
    }

    pub fn degree(&self) -> u32 {
        self.x + self.p
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Var {
    X,
    P,
}

/// Exact polynomial symbol in `(x, p)` graded by powers of `hbar`.
#[derive(Clone, Debug, PartialEq, Eq, Default, Hash)]
pub struct PolySymbol {
    terms: BTreeMap<Exponent, Coeff>,
}

impl PolySymbol {
    pub fn zero() -> Self {
        PolySymbol::default()
    }

    pub fn constant(c: Rational) -> Self {
        Self::monomial(0, 0, 0, Coeff::real(c))
    }

    pub fn one() -> Self {
        Self::constant(Rational::one())
    }

    pub fn monomial(x: u32, p: u32, hbar: u32, c: Coeff) -> Self {
        let mut s = PolySymbol::zero();
        s.add_term(Exponent::new(x, p, hbar), c);
        s
    }

    pub fn x() -> Self {
        Self::monomial(1, 0, 0, Coeff::one())
    }

    pub fn p() -> Self {
        Self::monomial(0, 1, 0, Coeff::one())
    }

    pub fn hbar() -> Self {
        Self::monomial(0, 0, 1, Coeff::one())
    }

    /// Harmonic-oscillator action `I = (x^2 + p^2)/2`.
    pub fn action() -> Self {
        let half = Coeff::real(rat(1, 2));
        let mut s = Self::monomial(2, 0, 0, half.clone());
        s.add_term(Exponent::new(0, 2, 0), half);
        s
    }

    pub fn from_terms<I: IntoIterator<Item = (Exponent, Coeff)>>(terms: I) -> Self {
        let mut s = PolySymbol::zero();
        for (e, c) in terms {
            s.add_term(e, c);
        }
        s
    }

    /// Adds `c * monomial(e)`, dropping the entry if it cancels.
    pub fn add_term(&mut self, e: Exponent, c: Coeff) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(e) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let sum = o.get().clone() + c;
                if sum.is_zero() {
                    o.remove();
                } else {
                    *o.get_mut() = sum;
                }
            }
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Exponent, &Coeff)> {
        self.terms.iter()
    }

    pub fn coeff(&self, x: u32, p: u32, hbar: u32) -> Coeff {
        self.terms.get(&Exponent::new(x, p, hbar)).cloned().unwrap_or_default()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Total degree in `(x, p)`; zero for the zero symbol.
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(Exponent::degree).max().unwrap_or(0)
    }

    pub fn hbar_order(&self) -> u32 {
        self.terms.keys().map(|e| e.hbar).max().unwrap_or(0)
    }

    /// Lowest nonzero `(x,p)`-degree, `None` for the zero symbol.
    pub fn min_degree(&self) -> Option<u32> {
        self.terms.keys().map(Exponent::degree).min()
    }

    pub fn is_real(&self) -> bool {
        self.terms.values().all(Coeff::is_real)
    }

    pub fn real_part(&self) -> Self {
        Self::from_terms(self.terms.iter().map(|(e, c)| (*e, Coeff::real(c.re.clone()))))
    }

    pub fn conj(&self) -> Self {
        Self::from_terms(self.terms.iter().map(|(e, c)| (*e, c.conj())))
    }

    pub fn scale(&self, c: &Coeff) -> Self {
        Self::from_terms(self.terms.iter().map(|(e, v)| (*e, v * c)))
    }

    pub fn scale_rational(&self, r: &Rational) -> Self {
        Self::from_terms(self.terms.iter().map(|(e, v)| (*e, v.scale(r))))
    }

    /// Multiplies by `hbar^k`.
    pub fn shift_hbar(&self, k: u32) -> Self {
        Self::from_terms(self.terms.iter().map(|(e, c)| (Exponent::new(e.x, e.p, e.hbar + k), c.clone())))
    }

    /// Drops every term of `hbar`-order above `k`.
    pub fn truncate_hbar(&self, k: u32) -> Self {
        Self::from_terms(self.terms.iter().filter(|(e, _)| e.hbar <= k).map(|(e, c)| (*e, c.clone())))
    }

    /// Coefficient of `hbar^k` as an `hbar`-free symbol.
    pub fn hbar_part(&self, k: u32) -> Self {
        Self::from_terms(
            self.terms.iter().filter(|(e, _)| e.hbar == k).map(|(e, c)| (Exponent::new(e.x, e.p, 0), c.clone())),
        )
    }

    /// The `hbar^0` part.
    pub fn principal(&self) -> Self {
        self.hbar_part(0)
    }

    /// Homogeneous part of `(x,p)`-degree `d` (all `hbar` orders kept).
    pub fn homogeneous_part(&self, d: u32) -> Self {
        Self::from_terms(self.terms.iter().filter(|(e, _)| e.degree() == d).map(|(e, c)| (*e, c.clone())))
    }

    pub fn derive(&self, var: Var) -> Self {
        let mut out = PolySymbol::zero();
        for (e, c) in &self.terms {
            let (power, exp) = match var {
                Var::X if e.x > 0 => (e.x, Exponent::new(e.x - 1, e.p, e.hbar)),
                Var::P if e.p > 0 => (e.p, Exponent::new(e.x, e.p - 1, e.hbar)),
                _ => continue,
            };
            out.add_term(exp, c.scale(&rat_int(power as i64)));
        }
        out
    }

    /// Mixed partial `d^nx/dx^nx d^np/dp^np`.
    pub fn derive_n(&self, nx: u32, np: u32) -> Self {
        let mut out = PolySymbol::zero();
        for (e, c) in &self.terms {
            if e.x < nx || e.p < np {
                continue;
            }
            let f = falling(e.x, nx) * falling(e.p, np);
            out.add_term(Exponent::new(e.x - nx, e.p - np, e.hbar), c.scale(&Rational::from_integer(f)));
        }
        out
    }

    /// Floating evaluation at `(x, p)` with the numeric value of `hbar`.
    pub fn eval(&self, x: f64, p: f64, hbar: f64) -> Complex64 {
        let mut re = 0.0;
        let mut im = 0.0;
        for (e, c) in &self.terms {
            let m = x.powi(e.x as i32) * p.powi(e.p as i32) * hbar.powi(e.hbar as i32);
            re += to_f64(&c.re) * m;
            if !c.im.is_zero() {
                im += to_f64(&c.im) * m;
            }
        }
        Complex64::new(re, im)
    }

    pub fn pow(&self, k: u32) -> Self {
        let mut out = PolySymbol::one();
        for _ in 0..k {
            out = &out * self;
        }
        out
    }

    /// Substitutes `x -> a x + b p`, `p -> c x + d p` for `m = [[a, b], [c, d]]`.
    pub fn compose_linear(&self, m: &[[Rational; 2]; 2]) -> Self {
        let xs = linear_form(&m[0][0], &m[0][1]);
        let ps = linear_form(&m[1][0], &m[1][1]);
        self.substitute(&xs, &ps)
    }

    /// Substitutes `x -> x + x0`, `p -> p + p0`.
    pub fn translate(&self, x0: &Rational, p0: &Rational) -> Self {
        let xs = &PolySymbol::x() + &PolySymbol::constant(x0.clone());
        let ps = &PolySymbol::p() + &PolySymbol::constant(p0.clone());
        self.substitute(&xs, &ps)
    }

    /// Replaces `x` and `p` by the given symbols; `hbar` powers carry over.
    pub fn substitute(&self, xs: &PolySymbol, ps: &PolySymbol) -> Self {
        let mut xpow: Vec<PolySymbol> = vec![PolySymbol::one()];
        let mut ppow: Vec<PolySymbol> = vec![PolySymbol::one()];
        let mut out = PolySymbol::zero();
        for (e, c) in &self.terms {
            while xpow.len() <= e.x as usize {
                let next = xpow.last().unwrap() * xs;
                xpow.push(next);
            }
            while ppow.len() <= e.p as usize {
                let next = ppow.last().unwrap() * ps;
                ppow.push(next);
            }
            let term = (&xpow[e.x as usize] * &ppow[e.p as usize]).shift_hbar(e.hbar).scale(c);
            out += &term;
        }
        out
    }

    /// Sorted `i j k num/den [num/den]` lines.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (e, c) in &self.terms {
            s.push_str(&format!("{} {} {} {}", e.x, e.p, e.hbar, fmt_ratio(&c.re)));
            if !c.im.is_zero() {
                s.push_str(&format!(" {}", fmt_ratio(&c.im)));
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut out = PolySymbol::zero();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: &str| Error::Parse(format!("line {}: {msg}: '{line}'", lineno + 1));
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 4 && fields.len() != 5 {
                return Err(err("expected 4 or 5 fields"));
            }
            let exps: Vec<u32> = fields[..3]
                .iter()
                .map(|f| f.parse::<u32>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| err("bad exponent"))?;
            let re = parse_rational(fields[3]).map_err(|_| err("bad coefficient"))?;
            let im = match fields.get(4) {
                Some(f) => parse_rational(f).map_err(|_| err("bad imaginary coefficient"))?,
                None => Rational::zero(),
            };
            out.add_term(Exponent::new(exps[0], exps[1], exps[2]), Coeff::new(re, im));
        }
        Ok(out)
    }
}

fn fmt_ratio(r: &Rational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

fn falling(n: u32, k: u32) -> BigInt {
    (0..k).fold(BigInt::one(), |acc, i| acc * BigInt::from(n - i))
}

fn linear_form(a: &Rational, b: &Rational) -> PolySymbol {
    let mut s = PolySymbol::zero();
    s.add_term(Exponent::new(1, 0, 0), Coeff::real(a.clone()));
    s.add_term(Exponent::new(0, 1, 0), Coeff::real(b.clone()));
    s
}

impl AddAssign<&PolySymbol> for PolySymbol {
    fn add_assign(&mut self, rhs: &PolySymbol) {
        for (e, c) in &rhs.terms {
            self.add_term(*e, c.clone());
        }
    }
}

impl<'a> Add<&'a PolySymbol> for &'a PolySymbol {
    type Output = PolySymbol;
    fn add(self, rhs: &PolySymbol) -> PolySymbol {
        let mut out = self.clone();
        out += rhs;
        out
    }
}

impl<'a> Sub<&'a PolySymbol> for &'a PolySymbol {
    type Output = PolySymbol;
    fn sub(self, rhs: &PolySymbol) -> PolySymbol {
        let mut out = self.clone();
        for (e, c) in &rhs.terms {
            out.add_term(*e, -c.clone());
        }
        out
    }
}

impl<'a> Mul<&'a PolySymbol> for &'a PolySymbol {
    type Output = PolySymbol;
    fn mul(self, rhs: &PolySymbol) -> PolySymbol {
        let mut out = PolySymbol::zero();
        for (ea, ca) in &self.terms {
            for (eb, cb) in &rhs.terms {
                out.add_term(Exponent::new(ea.x + eb.x, ea.p + eb.p, ea.hbar + eb.hbar), ca * cb);
            }
        }
        out
    }
}

impl Neg for &PolySymbol {
    type Output = PolySymbol;
    fn neg(self) -> PolySymbol {
        PolySymbol::from_terms(self.terms.iter().map(|(e, c)| (*e, -c.clone())))
    }
}

macro_rules! owned_binop {
    ($tr:ident, $m:ident) => {
        impl $tr<PolySymbol> for PolySymbol {
            type Output = PolySymbol;
            fn $m(self, rhs: PolySymbol) -> PolySymbol {
                (&self).$m(&rhs)
            }
        }
        impl $tr<&PolySymbol> for PolySymbol {
            type Output = PolySymbol;
            fn $m(self, rhs: &PolySymbol) -> PolySymbol {
                (&self).$m(rhs)
            }
        }
    };
}
owned_binop!(Add, add);
owned_binop!(Sub, sub);
owned_binop!(Mul, mul);

impl Neg for PolySymbol {
    type Output = PolySymbol;
    fn neg(self) -> PolySymbol {
        -&self
    }
}

/// Human-readable expression, parseable by [`parse_expr`].
impl fmt::Display for PolySymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (e, c) in &self.terms {
            let (sign, mag) =
                if c.is_real() && c.re.is_negative() { ("-", Coeff::real(-c.re.clone())) } else { ("+", c.clone()) };
            if first {
                if sign == "-" {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {sign} ")?;
            }
            first = false;
            let mut factors = Vec::new();
            if !(mag.is_real() && mag.re.is_one()) || (e.x == 0 && e.p == 0 && e.hbar == 0) {
                factors.push(mag.to_string());
            }
            for (name, pw) in [("x", e.x), ("p", e.p), ("h", e.hbar)] {
                match pw {
                    0 => {}
                    1 => factors.push(name.to_string()),
                    n => factors.push(format!("{name}^{n}")),
                }
            }
            write!(f, "{}", factors.join("*"))?;
        }
        Ok(())
    }
}

/// Parses a polynomial expression in `x`, `p`, `h` (the value of hbar), `I`
/// (the oscillator action) and `i` (imaginary unit). Supports `+ - * / ^`,
/// parentheses, integers, decimals and rationals. Division is only by
/// constants.
pub fn parse_expr(src: &str) -> Result<PolySymbol> {
    let tokens = tokenize(src)?;
    let mut parser = ExprParser { tokens, pos: 0 };
    let out = parser.sum()?;
    if parser.pos != parser.tokens.len() {
        return Err(Error::Parse(format!("unexpected trailing input in '{src}'")));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(Rational),
    Ident(char),
    Op(char),
}

fn tokenize(src: &str) -> Result<Vec<Tok>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '-' || chars[j] == '+') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let lit: String = chars[start..i].iter().collect();
            out.push(Tok::Num(parse_decimal(&lit)?));
        } else if matches!(c, 'x' | 'p' | 'h' | 'I' | 'i') {
            out.push(Tok::Ident(c));
            i += 1;
        } else if matches!(c, '+' | '-' | '*' | '/' | '^' | '(' | ')') {
            out.push(Tok::Op(c));
            i += 1;
        } else {
            return Err(Error::Parse(format!("unexpected character '{c}' in '{src}'")));
        }
    }
    Ok(out)
}

struct ExprParser {
    tokens: Vec<Tok>,
    pos: usize,
}

impl ExprParser {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos)
    }

    fn eat(&mut self, op: char) -> bool {
        if self.peek() == Some(&Tok::Op(op)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn sum(&mut self) -> Result<PolySymbol> {
        let mut acc = self.product()?;
        loop {
            if self.eat('+') {
                acc = acc + self.product()?;
            } else if self.eat('-') {
                acc = acc - self.product()?;
            } else {
                return Ok(acc);
            }
        }
    }

    fn product(&mut self) -> Result<PolySymbol> {
        let mut acc = self.unary()?;
        loop {
            if self.eat('*') {
                acc = acc * self.unary()?;
            } else if self.eat('/') {
                let d = self.unary()?;
                let c = constant_of(&d).ok_or_else(|| Error::Parse("division by a non-constant".into()))?;
                if c.is_zero() {
                    return Err(Error::Parse("division by zero".into()));
                }
                acc = acc.scale_rational(&c.recip());
            } else if matches!(self.peek(), Some(Tok::Ident(_)) | Some(Tok::Num(_)) | Some(Tok::Op('('))) {
                // implicit multiplication, e.g. "2x" or "h^2 I"
                acc = acc * self.unary()?;
            } else {
                return Ok(acc);
            }
        }
    }

    fn unary(&mut self) -> Result<PolySymbol> {
        if self.eat('-') {
            return Ok(-self.unary()?);
        }
        if self.eat('+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<PolySymbol> {
        let base = self.atom()?;
        if self.eat('^') {
            let e = match self.tokens.get(self.pos) {
                Some(Tok::Num(n)) if n.is_integer() && !n.is_negative() => n.to_integer(),
                _ => return Err(Error::Parse("exponent must be a non-negative integer".into())),
            };
            self.pos += 1;
            let e = e.to_u32().ok_or_else(|| Error::Parse("exponent too large".into()))?;
            return Ok(base.pow(e));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<PolySymbol> {
        match self.tokens.get(self.pos).cloned() {
            Some(Tok::Num(n)) => {
                self.pos += 1;
                Ok(PolySymbol::constant(n))
            }
            Some(Tok::Ident(c)) => {
                self.pos += 1;
                Ok(match c {
                    'x' => PolySymbol::x(),
                    'p' => PolySymbol::p(),
                    'h' => PolySymbol::hbar(),
                    'I' => PolySymbol::action(),
                    _ => PolySymbol::monomial(0, 0, 0, Coeff::i()),
                })
            }
            Some(Tok::Op('(')) => {
                self.pos += 1;
                let inner = self.sum()?;
                if !self.eat(')') {
                    return Err(Error::Parse("missing ')'".into()));
                }
                Ok(inner)
            }
            other => Err(Error::Parse(format!("unexpected token {other:?}"))),
        }
    }
}

fn constant_of(s: &PolySymbol) -> Option<Rational> {
    if s.is_zero() {
        return Some(Rational::zero());
    }
    if s.len() == 1 {
        let (e, c) = s.terms().next().unwrap();
        if e.x == 0 && e.p == 0 && e.hbar == 0 && c.is_real() {
            return Some(c.re.clone());
        }
    }
    None
}

/// Float-coefficient compilation of a real symbol at a fixed value of hbar,
/// with derivative tables for fast gradient and Hessian evaluation.
#[derive(Clone, Debug)]
pub struct NumericSymbol {
    value: Vec<(i32, i32, f64)>,
    dx: Vec<(i32, i32, f64)>,
    dp: Vec<(i32, i32, f64)>,
    dxx: Vec<(i32, i32, f64)>,
    dxp: Vec<(i32, i32, f64)>,
    dpp: Vec<(i32, i32, f64)>,
    degree: u32,
    source: PolySymbol,
}

impl NumericSymbol {
    /// Substitutes `hbar` and keeps the real part. Fails if the result has an
    /// imaginary part.
    pub fn new(sym: &PolySymbol, hbar: f64) -> Result<Self> {
        let mut collapsed: BTreeMap<(u32, u32), (f64, f64)> = BTreeMap::new();
        let mut exact = PolySymbol::zero();
        let hbar_r = rational_from_f64(hbar)?;
        for (e, c) in sym.terms() {
            let hp = num_traits::pow(hbar_r.clone(), e.hbar as usize);
            exact.add_term(Exponent::new(e.x, e.p, 0), c.scale(&hp));
            let entry = collapsed.entry((e.x, e.p)).or_insert((0.0, 0.0));
            entry.0 += to_f64(&c.re) * hbar.powi(e.hbar as i32);
            entry.1 += to_f64(&c.im) * hbar.powi(e.hbar as i32);
        }
        if !exact.is_real() {
            return Err(Error::InvalidArgument(format!("symbol has an imaginary part at hbar = {hbar}")));
        }
        let table = |s: &PolySymbol| -> Vec<(i32, i32, f64)> {
            s.terms().map(|(e, c)| (e.x as i32, e.p as i32, to_f64(&c.re))).collect()
        };
        Ok(NumericSymbol {
            value: table(&exact),
            dx: table(&exact.derive_n(1, 0)),
            dp: table(&exact.derive_n(0, 1)),
            dxx: table(&exact.derive_n(2, 0)),
            dxp: table(&exact.derive_n(1, 1)),
            dpp: table(&exact.derive_n(0, 2)),
            degree: exact.degree(),
            source: exact,
        })
    }

    /// The `hbar`-substituted exact symbol.
    pub fn exact(&self) -> &PolySymbol {
        &self.source
    }

    fn eval_table(&self, t: &[(i32, i32, f64)], x: f64, p: f64) -> f64 {
        let d = self.degree as usize + 1;
        let mut xs = [1.0f64; 32];
        let mut ps = [1.0f64; 32];
        if d <= 32 {
            for k in 1..d {
                xs[k] = xs[k - 1] * x;
                ps[k] = ps[k - 1] * p;
            }
            t.iter().map(|&(i, j, c)| c * xs[i as usize] * ps[j as usize]).sum()
        } else {
            t.iter().map(|&(i, j, c)| c * x.powi(i) * p.powi(j)).sum()
        }
    }

    pub fn value(&self, x: f64, p: f64) -> f64 {
        self.eval_table(&self.value, x, p)
    }

    pub fn gradient(&self, x: f64, p: f64) -> [f64; 2] {
        [self.eval_table(&self.dx, x, p), self.eval_table(&self.dp, x, p)]
    }

    pub fn hessian(&self, x: f64, p: f64) -> [[f64; 2]; 2] {
        let xp = self.eval_table(&self.dxp, x, p);
        [[self.eval_table(&self.dxx, x, p), xp], [xp, self.eval_table(&self.dpp, x, p)]]
    }

    pub fn partial(&self, nx: u32, np: u32, x: f64, p: f64) -> f64 {
        self.source.derive_n(nx, np).eval(x, p, 0.0).re
    }
}

fn binomial_f64(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Central-difference weights for the `k`-th derivative: offsets
/// `(k/2 - j) h` with weights `(-1)^j C(k, j) / h^k`.
fn stencil(k: u32, h: f64) -> Vec<(f64, f64)> {
    (0..=k)
        .map(|j| {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            ((k as f64 / 2.0 - j as f64) * h, sign * binomial_f64(k, j) / h.powi(k as i32))
        })
        .collect()
}

/// `d^a/dx^a d^b/dp^b H` at `(x, p)`. Analytic partials are used when the
/// Hamiltonian carries them; otherwise the Hessian (or gradient/value for
/// low orders) is differenced with a tensor central stencil of step
/// `eps^(1/(k+2))`, `k` the number of extra orders, plus one Richardson level.
fn partial_of(h: &SmoothHamiltonian, a: u32, b: u32, x: f64, p: f64) -> f64 {
    if let Some(v) = h.partial(a, b, x, p) {
        return v;
    }
    match a + b {
        0 => return h.value(x, p),
        1 => return h.gradient(x, p)[if a == 1 { 0 } else { 1 }],
        2 => {
            let q = h.hessian(x, p);
            return match a {
                2 => q[0][0],
                1 => q[0][1],
                _ => q[1][1],
            };
        }
        _ => {}
    }
    // base entry of the Hessian to difference
    let (a0, b0) = if a >= 2 {
        (2, 0)
    } else if a == 1 {
        (1, 1)
    } else {
        (0, 2)
    };
    let (ka, kb) = (a - a0, b - b0);
    let base = |x: f64, p: f64| {
        let q = h.hessian(x, p);
        match (a0, b0) {
            (2, 0) => q[0][0],
            (1, 1) => q[0][1],
            _ => q[1][1],
        }
    };
    let k = ka + kb;
    let step = f64::EPSILON.powf(1.0 / (k as f64 + 2.0));
    let sx = step * x.abs().max(1.0);
    let sp = step * p.abs().max(1.0);
    let diff = |scale: f64| {
        let mut acc = 0.0;
        for (ox, wx) in stencil(ka, sx * scale) {
            for (op, wp) in stencil(kb, sp * scale) {
                acc += wx * wp * base(x + ox, p + op);
            }
        }
        acc
    };
    let coarse = diff(1.0);
    let fine = diff(0.5);
    (4.0 * fine - coarse) / 3.0
}

/// Taylor polynomial of `H` about `center` through total degree `degree`:
/// coefficient of `(x - x0)^a (p - p0)^b` is `d^a d^b H / (a! b!)`, written in
/// the shifted variables. The constant term is dropped on request.
pub fn taylor_from_callable(
    h: &SmoothHamiltonian,
    center: (f64, f64),
    degree: u32,
    drop_constant: bool,
) -> Result<PolySymbol> {
    if degree < 2 {
        return Err(Error::InvalidArgument(format!("Taylor degree must be at least 2, got {degree}")));
    }
    let mut out = PolySymbol::zero();
    let mut fact = vec![1.0f64];
    for k in 1..=degree {
        fact.push(fact[k as usize - 1] * k as f64);
    }
    for d in 0..=degree {
        if d == 0 && drop_constant {
            continue;
        }
        for a in 0..=d {
            let b = d - a;
            let v = partial_of(h, a, b, center.0, center.1) / (fact[a as usize] * fact[b as usize]);
            if !v.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "derivative d^{a}x d^{b}p is not finite at the expansion point"
                )));
            }
            if v != 0.0 {
                out.add_term(Exponent::new(a, b, 0), Coeff::real(rational_from_f64(v)?));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn i_sym() -> PolySymbol {
        PolySymbol::action()
    }

    #[test]
    fn derive_power_rule() {
        let x2p = PolySymbol::monomial(2, 1, 0, Coeff::one());
        assert_eq!(x2p.derive(Var::X), PolySymbol::monomial(1, 1, 0, Coeff::real(rat_int(2))));
        assert_eq!(i_sym().derive(Var::P), PolySymbol::p());
        let h2x3 = PolySymbol::monomial(3, 0, 2, Coeff::one());
        assert_eq!(h2x3.derive(Var::X), PolySymbol::monomial(2, 0, 2, Coeff::real(rat_int(3))));
    }

    #[test]
    fn eval_examples() {
        assert_eq!(i_sym().eval(1.0, 1.0, 0.3), Complex64::new(1.0, 0.0));
        let s = &i_sym().pow(2) - &PolySymbol::hbar().pow(2).scale_rational(&rat(1, 4));
        assert_eq!(s.eval(0.0, 0.0, 1.0).re, -0.25);
        let mut xp = PolySymbol::monomial(1, 1, 0, Coeff::one());
        xp.add_term(Exponent::new(0, 0, 1), Coeff::new(Rational::zero(), rat(1, 2)));
        assert_eq!(xp.eval(2.0, 3.0, 1.0), Complex64::new(6.0, 0.5));
        // real pipelines report an exactly zero imaginary part
        assert_eq!(i_sym().eval(0.7, -1.3, 0.1).im, 0.0);
    }

    #[test]
    fn no_zero_coefficients_stored() {
        let s = &i_sym() - &i_sym();
        assert!(s.is_zero());
        assert_eq!(s.len(), 0);
    }

    #[test]
    fn text_roundtrip_and_sorted() {
        let s = parse_expr("I^2 - 5/4*h^2*I + 3*i*x*p").unwrap();
        let text = s.to_text();
        let lines: Vec<&str> = text.lines().collect();
        let mut sorted = lines.clone();
        sorted.sort_by_key(|l| {
            let f: Vec<u32> = l.split_whitespace().take(3).map(|v| v.parse().unwrap()).collect();
            (f[0], f[1], f[2])
        });
        assert_eq!(lines, sorted);
        assert_eq!(PolySymbol::from_text(&text).unwrap(), s);
        assert!(text.contains("1 1 0 0/1 3/1"));
    }

    #[test]
    fn from_text_rejects_garbage() {
        assert!(PolySymbol::from_text("1 2 x 1/2").is_err());
        assert!(PolySymbol::from_text("1 2").is_err());
    }

    #[test]
    fn expression_parser() {
        let s = parse_expr("p^2/2 + x^2/2 + 0.1*x^4").unwrap();
        assert_eq!(s.coeff(4, 0, 0), Coeff::real(rat(1, 10)));
        assert_eq!(s.coeff(0, 2, 0), Coeff::real(rat(1, 2)));
        assert_eq!(parse_expr("(x+p)^2").unwrap(), parse_expr("x^2 + 2x*p + p^2").unwrap());
        assert_eq!(parse_expr("I").unwrap(), i_sym());
        assert!(parse_expr("x/p").is_err());
        assert!(parse_expr("x^").is_err());
        assert_eq!(parse_expr(&s.to_string()).unwrap(), s);
    }

    #[test]
    fn decimal_rationals() {
        assert_eq!(rational_from_decimal(0.1).unwrap(), rat(1, 10));
        assert_eq!(rational_from_decimal(-2.5e-3).unwrap(), rat(-1, 400));
        assert_eq!(parse_rational("7/8").unwrap(), rat(7, 8));
        assert_eq!(parse_rational("3e2").unwrap(), rat_int(300));
    }

    #[test]
    fn compose_linear_and_translate() {
        // x -> 2x, p -> p/2 maps x^2 + p^2 to 4x^2 + p^2/4
        let m = [[rat_int(2), rat_int(0)], [rat_int(0), rat(1, 2)]];
        let s = parse_expr("x^2 + p^2").unwrap().compose_linear(&m);
        assert_eq!(s, parse_expr("4x^2 + p^2/4").unwrap());
        let t = parse_expr("(x-1)^2").unwrap().translate(&rat_int(1), &rat_int(0));
        assert_eq!(t, parse_expr("x^2").unwrap());
    }

    #[test]
    fn numeric_symbol_matches_exact_eval() {
        let s = parse_expr("p^2/2 + x^2/2 + x^3 - 3/7*x*p + h^2*x^2").unwrap();
        let n = NumericSymbol::new(&s, 0.3).unwrap();
        let (x, p) = (0.4, -1.1);
        assert!((n.value(x, p) - s.eval(x, p, 0.3).re).abs() < 1e-14);
        let g = n.gradient(x, p);
        assert!((g[0] - s.derive(Var::X).eval(x, p, 0.3).re).abs() < 1e-14);
        let hs = n.hessian(x, p);
        assert!((hs[0][1] - (-3.0 / 7.0)).abs() < 1e-15);
        assert!(NumericSymbol::new(&parse_expr("i*x").unwrap(), 1.0).is_err());
    }

    #[test]
    fn taylor_of_polynomial_is_exact() {
        let sym = parse_expr("p^2/2 + x^2/2 + x^4").unwrap();
        let h = SmoothHamiltonian::from_symbol(&sym, 1.0).unwrap();
        assert_eq!(taylor_from_callable(&h, (0.0, 0.0), 4, true).unwrap(), sym);
        let i = SmoothHamiltonian::from_symbol(&i_sym(), 1.0).unwrap();
        assert_eq!(taylor_from_callable(&i, (0.0, 0.0), 2, true).unwrap(), i_sym());
        assert!(taylor_from_callable(&i, (0.0, 0.0), 1, true).is_err());
    }

    #[test]
    fn taylor_of_morse_by_differences() {
        let h = SmoothHamiltonian::kinetic_potential(
            1.0,
            |x: f64| 0.5 * (1.0 - (-x).exp()).powi(2),
            |x: f64| (-x).exp() - (-2.0 * x).exp(),
            |x: f64| 2.0 * (-2.0 * x).exp() - (-x).exp(),
        );
        let t = taylor_from_callable(&h, (0.0, 0.0), 3, true).unwrap();
        let c = |i, j| to_f64(&t.coeff(i, j, 0).re);
        assert!((c(2, 0) - 0.5).abs() < 1e-7);
        assert!((c(3, 0) + 0.5).abs() < 1e-7, "{}", c(3, 0));
        assert!((c(0, 2) - 0.5).abs() < 1e-7);
        for (i, j) in [(1, 0), (0, 1), (1, 1), (2, 1), (1, 2), (0, 3)] {
            assert!(c(i, j).abs() < 1e-7, "({i},{j}) = {}", c(i, j));
        }
    }
}
