//! Weyl quantisation of polynomial symbols in a truncated oscillator basis.
//!
//! `x = sqrt(hbar/2) (a + a^+)`, `p = i P` with the real antisymmetric
//! `P = sqrt(hbar/2) (a^+ - a)`. A monomial `x^a p^b` is Weyl ordered by
//! `2^-a sum_k C(a, k) x^k p^b x^(a-k)`. Products are formed in a basis
//! enlarged by the symbol degree so the retained block is exact.

use num_complex::Complex64;

use super::eigen::{symmetric_eigen, SymMatrix};
use super::{max_change, OracleSpectrum};
use crate::error::{Error, Result};
use crate::polysym::PolySymbol;

#[derive(Clone, Copy, Debug)]
pub struct FockOptions {
    /// Initial basis size; levels are only reported below 80% of it.
    pub basis: Option<usize>,
    pub tolerance: f64,
    pub max_doublings: usize,
}

impl Default for FockOptions {
    fn default() -> Self {
        FockOptions { basis: None, tolerance: 1e-10, max_doublings: 4 }
    }
}

/// Dense square matrix with a known half-bandwidth.
#[derive(Clone, Debug)]
struct Banded {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl Banded {
    fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Banded { n, bw: 0, data }
    }

    fn ladder(n: usize, hbar: f64, sign: f64) -> Self {
        // sqrt(hbar/2) (a + sign a^+): <i|a|i+1> = sqrt(i+1)
        let s = (0.5 * hbar).sqrt();
        let mut data = vec![0.0; n * n];
        for i in 0..n - 1 {
            let v = s * ((i + 1) as f64).sqrt();
            data[i * n + i + 1] = v;
            data[(i + 1) * n + i] = sign * v;
        }
        Banded { n, bw: 1, data }
    }

    fn mul(&self, o: &Banded) -> Banded {
        let n = self.n;
        let bw = self.bw + o.bw;
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            let l0 = i.saturating_sub(self.bw);
            let l1 = (i + self.bw).min(n - 1);
            for l in l0..=l1 {
                let a = self.data[i * n + l];
                if a == 0.0 {
                    continue;
                }
                let j0 = l.saturating_sub(o.bw);
                let j1 = (l + o.bw).min(n - 1);
                for j in j0..=j1 {
                    data[i * n + j] += a * o.data[l * n + j];
                }
            }
        }
        Banded { n, bw, data }
    }

    fn add_scaled(&mut self, o: &Banded, s: f64) {
        self.bw = self.bw.max(o.bw);
        for (a, b) in self.data.iter_mut().zip(&o.data) {
            *a += s * b;
        }
    }
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Complex coefficients of `x^a p^b` with `hbar` substituted.
fn collapse(sym: &PolySymbol, hbar: f64) -> Vec<((u32, u32), Complex64)> {
    let mut out: std::collections::BTreeMap<(u32, u32), Complex64> = Default::default();
    for (e, c) in sym.terms() {
        *out.entry((e.x, e.p)).or_default() += c.to_complex64() * hbar.powi(e.hbar as i32);
    }
    out.into_iter().filter(|(_, c)| *c != Complex64::new(0.0, 0.0)).collect()
}

/// Rejects symbols whose top-degree part is odd or negative somewhere.
fn check_bounded(terms: &[((u32, u32), Complex64)]) -> Result<()> {
    let deg = terms.iter().map(|((a, b), _)| a + b).max().unwrap_or(0);
    if deg == 0 {
        return Ok(());
    }
    if deg % 2 == 1 {
        return Err(Error::Unbounded(format!("leading degree {deg} is odd")));
    }
    let top: Vec<_> = terms.iter().filter(|((a, b), _)| a + b == deg).collect();
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for k in 0..720 {
        let t = k as f64 * std::f64::consts::PI / 360.0;
        let (s, c) = t.sin_cos();
        let v: f64 = top.iter().map(|((a, b), z)| z.re * c.powi(*a as i32) * s.powi(*b as i32)).sum();
        lo = lo.min(v);
        hi = hi.max(v.abs());
    }
    if lo < -1e-12 * hi {
        return Err(Error::Unbounded(format!("leading degree-{deg} part is negative in some direction")));
    }
    Ok(())
}

/// Weyl-quantised matrix of the symbol in a basis of size `n`, returned as
/// the real symmetric matrix (or its `2n` real embedding when the operator
/// has an imaginary part).
fn weyl_matrix(terms: &[((u32, u32), Complex64)], hbar: f64, n: usize) -> Result<(SymMatrix, bool)> {
    let deg = terms.iter().map(|((a, b), _)| a + b).max().unwrap_or(0) as usize;
    let big = n + deg + 2;
    let x = Banded::ladder(big, hbar, 1.0);
    let p = Banded::ladder(big, hbar, -1.0);
    let max_a = terms.iter().map(|((a, _), _)| *a).max().unwrap_or(0) as usize;
    let max_b = terms.iter().map(|((_, b), _)| *b).max().unwrap_or(0) as usize;
    let mut xp = vec![Banded::identity(big)];
    for k in 1..=max_a {
        let next = xp[k - 1].mul(&x);
        xp.push(next);
    }
    let mut pp = vec![Banded::identity(big)];
    for k in 1..=max_b {
        let next = pp[k - 1].mul(&p);
        pp.push(next);
    }
    let mut re = Banded { n: big, bw: 0, data: vec![0.0; big * big] };
    let mut im = re.clone();
    for ((a, b), c) in terms {
        let (a, b) = (*a, *b);
        let mut w = Banded { n: big, bw: 0, data: vec![0.0; big * big] };
        for k in 0..=a {
            let term = xp[k as usize].mul(&pp[b as usize]).mul(&xp[(a - k) as usize]);
            w.add_scaled(&term, binomial(a, k) / 2f64.powi(a as i32));
        }
        // c i^b W
        let phase = match b % 4 {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, 1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, -1.0),
        };
        let z = c * phase;
        if z.re != 0.0 {
            re.add_scaled(&w, z.re);
        }
        if z.im != 0.0 {
            im.add_scaled(&w, z.im);
        }
    }
    let block = |m: &Banded, i: usize, j: usize| m.data[i * big + j];
    // Hermitian: real part symmetric, imaginary part antisymmetric
    let defect = SymMatrix::from_fn(n, |i, j| {
        0.5 * (block(&re, i, j) - block(&re, j, i)).abs() + 0.5 * (block(&im, i, j) + block(&im, j, i)).abs()
    });
    let mut r = SymMatrix::from_fn(n, |i, j| 0.5 * (block(&re, i, j) + block(&re, j, i)));
    let j_part = SymMatrix::from_fn(n, |i, j| 0.5 * (block(&im, i, j) - block(&im, j, i)));
    let scale = r.norm().max(j_part.norm()).max(f64::MIN_POSITIVE);
    if defect.norm() > 1e-12 * scale {
        return Err(Error::InvalidArgument("Weyl quantisation of the symbol is not Hermitian".into()));
    }
    if j_part.norm() <= 1e-14 * scale {
        r.symmetrize();
        return Ok((r, false));
    }
    // [[R, -J], [J, R]] has each eigenvalue of R + iJ twice
    let emb = SymMatrix::from_fn(2 * n, |i, j| {
        let (bi, bj) = (i / n, j / n);
        let (ii, jj) = (i % n, j % n);
        match (bi, bj) {
            (0, 0) | (1, 1) => r.get(ii, jj),
            (0, 1) => -j_part.get(ii, jj),
            _ => j_part.get(ii, jj),
        }
    });
    Ok((emb, true))
}

fn lowest(terms: &[((u32, u32), Complex64)], hbar: f64, n: usize, k: usize) -> Result<Vec<f64>> {
    let (m, doubled) = weyl_matrix(terms, hbar, n)?;
    let values = symmetric_eigen(&m, false)?.values;
    let values: Vec<f64> = if doubled { values.iter().step_by(2).copied().collect() } else { values };
    Ok(values.into_iter().take(k).collect())
}

pub fn fock_spectrum(sym: &PolySymbol, hbar: f64, k: usize, opts: &FockOptions) -> Result<OracleSpectrum> {
    if k == 0 {
        return Err(Error::InvalidArgument("at least one level must be requested".into()));
    }
    if !(hbar > 0.0) {
        return Err(Error::InvalidArgument("hbar must be positive".into()));
    }
    let terms = collapse(sym, hbar);
    check_bounded(&terms)?;
    // report only levels in the lower 80% of the basis
    let need = ((k as f64) / 0.8).ceil() as usize;
    let mut n = opts.basis.unwrap_or(32).max(need).next_power_of_two();
    let mut coarse = lowest(&terms, hbar, n, k)?;
    let mut history = Vec::new();
    for doubling in 0..=opts.max_doublings {
        let fine = lowest(&terms, hbar, 2 * n, k)?;
        let change = max_change(&coarse, &fine);
        history.push(change);
        if change <= opts.tolerance {
            let estimates = coarse.iter().zip(&fine).map(|(a, b)| (a - b).abs()).collect();
            return Ok(OracleSpectrum {
                method: "fock".into(),
                hbar,
                eigenvalues: fine,
                estimates,
                size: 2 * n,
                domain: None,
                doublings: doubling + 1,
                history,
                negated: false,
            });
        }
        n *= 2;
        coarse = fine;
    }
    Err(Error::OracleDiverged(format!(
        "Fock levels still changing by {:e} after {} doublings",
        history.last().copied().unwrap_or(f64::NAN),
        opts.max_doublings
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polysym::parse_expr;

    fn levels(s: &str, hbar: f64, k: usize) -> Vec<f64> {
        fock_spectrum(&parse_expr(s).unwrap(), hbar, k, &FockOptions::default()).unwrap().eigenvalues
    }

    #[test]
    fn functions_of_action() {
        for (n, e) in levels("I", 0.5, 6).iter().enumerate() {
            assert!((e - 0.5 * (n as f64 + 0.5)).abs() < 1e-12);
        }
        for (n, e) in levels("I^2", 1.0, 6).iter().enumerate() {
            let a = n as f64 + 0.5;
            assert!((e - (a * a + 0.25)).abs() < 1e-10, "{n}: {e}");
        }
        for (n, e) in levels("I^3 - 5/4*h^2*I", 1.0, 6).iter().enumerate() {
            let a = n as f64 + 0.5;
            assert!((e - a.powi(3)).abs() < 1e-9, "{n}: {e}");
        }
    }

    #[test]
    fn ordering_and_commutator() {
        // the Weyl symbol xp is (xp + px)/2: Hermitian, imaginary in this basis
        let terms = collapse(&parse_expr("x*p").unwrap(), 1.0);
        let (m, doubled) = weyl_matrix(&terms, 1.0, 6).unwrap();
        assert!(doubled);
        assert!(m.asymmetry() < 1e-15);
        // the symbol xp + i hbar/2 of the product x p is not
        let terms = collapse(&parse_expr("x*p + i*h/2").unwrap(), 1.0);
        assert!(weyl_matrix(&terms, 1.0, 6).is_err());
    }

    #[test]
    fn complex_hermitian_symbol() {
        // a momentum shift is unitary but makes the matrix complex
        let base = levels("p^2/2 + x^2/2 + x^4/10", 1.0, 4);
        let shifted = levels("(p - 1/2)^2/2 + x^2/2 + x^4/10", 1.0, 4);
        for (a, b) in base.iter().zip(&shifted) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn unbounded_symbols_rejected() {
        let s = parse_expr("p^2/2 + x^3").unwrap();
        assert!(matches!(fock_spectrum(&s, 1.0, 3, &FockOptions::default()), Err(Error::Unbounded(_))));
        let s = parse_expr("p^2/2 - x^4").unwrap();
        assert!(matches!(fock_spectrum(&s, 1.0, 3, &FockOptions::default()), Err(Error::Unbounded(_))));
    }
}
