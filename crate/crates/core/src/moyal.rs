//! Moyal brackets, the star product and the symbol of a function of an
//! operator.
//!
//! Convention: the Poisson tensor is fixed so that `{x, p} = +1`, which gives
//! `x * p = xp + i hbar / 2` for the star product. Even-order brackets do not
//! depend on this choice.

use num_bigint::BigInt;
use num_traits::One;

use crate::error::{Error, Result};
use crate::polysym::{rat, Coeff, PolySymbol, Rational};

/// Order `n` of a Moyal bracket. `n = 0` is the pointwise product and `n = 1`
/// the Poisson bracket.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct BracketOrder(pub u32);

pub type BracketFn = dyn Fn(&PolySymbol, &PolySymbol, u32) -> PolySymbol + Sync;

fn binomial(n: u32, k: u32) -> BigInt {
    let mut c = BigInt::one();
    for i in 0..k {
        c = c * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    c
}

fn factorial(n: u32) -> BigInt {
    (1..=n).fold(BigInt::one(), |acc, k| acc * BigInt::from(k))
}

/// `{A, B}_n = A_{,mu1..mun} J^{mu1 a1} ... J^{mun an} B_{,a1..an}`.
///
/// Each index pair contributes `+1` for `(x, p)` and `-1` for `(p, x)`, so
/// the n-fold contraction collapses to
/// `sum_k C(n,k) (-1)^(n-k) (d_x^k d_p^(n-k) A)(d_x^(n-k) d_p^k B)`.
pub fn moyal_bracket(a: &PolySymbol, b: &PolySymbol, n: BracketOrder) -> PolySymbol {
    let n = n.0;
    let mut out = PolySymbol::zero();
    if n > a.degree() || n > b.degree() {
        return out;
    }
    for k in 0..=n {
        let da = a.derive_n(k, n - k);
        if da.is_zero() {
            continue;
        }
        let db = b.derive_n(n - k, k);
        if db.is_zero() {
            continue;
        }
        let mut c = binomial(n, k);
        if (n - k) % 2 == 1 {
            c = -c;
        }
        let term = (&da * &db).scale_rational(&Rational::from_integer(c));
        out += &term;
    }
    out
}

/// Poisson bracket `{A, B}`.
pub fn poisson(a: &PolySymbol, b: &PolySymbol) -> PolySymbol {
    moyal_bracket(a, b, BracketOrder(1))
}

fn standard_bracket(a: &PolySymbol, b: &PolySymbol, n: u32) -> PolySymbol {
    moyal_bracket(a, b, BracketOrder(n))
}

/// A truncated star-series result. `exact` is true when every discarded
/// term vanishes identically, i.e. the value is the full star product.
#[derive(Clone, Debug, PartialEq)]
pub struct StarProduct {
    pub symbol: PolySymbol,
    pub exact: bool,
}

/// `(i/2)^n / n!` as a Gaussian rational.
fn series_weight(n: u32) -> Coeff {
    let mag = Rational::new(BigInt::one(), BigInt::from(2).pow(n) * factorial(n));
    Coeff::i_pow(n).scale(&mag)
}

/// Star series built on an arbitrary bracket implementation, keeping total
/// hbar-order `<= max_hbar_order`.
pub fn star_with(bracket: &BracketFn, a: &PolySymbol, b: &PolySymbol, max_hbar_order: u32) -> StarProduct {
    let natural = a.degree().min(b.degree());
    let mut kept = PolySymbol::zero();
    let mut exact = true;
    for n in 0..=natural {
        let term = bracket(a, b, n).scale(&series_weight(n)).shift_hbar(n);
        let head = term.truncate_hbar(max_hbar_order);
        if exact && head != term {
            exact = false;
        }
        kept += &head;
    }
    StarProduct { symbol: kept, exact }
}

/// Moyal star product `A * B = sum_n (1/n!) (i hbar/2)^n {A,B}_n`.
pub fn star(a: &PolySymbol, b: &PolySymbol, max_hbar_order: u32) -> StarProduct {
    star_with(&standard_bracket, a, b, max_hbar_order)
}

/// Full star product (the series always terminates on polynomials).
pub fn star_full(a: &PolySymbol, b: &PolySymbol) -> PolySymbol {
    let order = a.hbar_order() + b.hbar_order() + a.degree().min(b.degree());
    star(a, b, order).symbol
}

/// Symbol of the commutator, `2 sum_{n odd} (1/n!) (i hbar/2)^n {A,B}_n`.
pub fn star_commutator(a: &PolySymbol, b: &PolySymbol, max_hbar_order: u32) -> StarProduct {
    let natural = a.degree().min(b.degree());
    let two = Rational::from_integer(BigInt::from(2));
    let mut kept = PolySymbol::zero();
    let mut exact = true;
    for n in (1..=natural).step_by(2) {
        let term = moyal_bracket(a, b, BracketOrder(n)).scale(&series_weight(n).scale(&two)).shift_hbar(n);
        let head = term.truncate_hbar(max_hbar_order);
        if exact && head != term {
            exact = false;
        }
        kept += &head;
    }
    StarProduct { symbol: kept, exact }
}

/// `{H, H}_2 = 2 (H_xx H_pp - H_xp^2)`.
pub fn hessian_bracket(h: &PolySymbol) -> PolySymbol {
    moyal_bracket(h, h, BracketOrder(2))
}

/// Linear chain diagram `A_{,mu nu} J^{mu a} J^{nu b} A_{,a} A_{,b}`
/// `= A_xx A_p^2 - 2 A_xp A_x A_p + A_pp A_x^2`.
pub fn linear_chain(a: &PolySymbol) -> PolySymbol {
    let ax = a.derive_n(1, 0);
    let ap = a.derive_n(0, 1);
    let axx = a.derive_n(2, 0);
    let axp = a.derive_n(1, 1);
    let app = a.derive_n(0, 2);
    let two = Rational::from_integer(BigInt::from(2));
    let t1 = &(&axx * &ap) * &ap;
    let t2 = (&(&axp * &ax) * &ap).scale_rational(&two);
    let t3 = &(&app * &ax) * &ax;
    &(&t1 - &t2) + &t3
}

/// Evaluates the polynomial `f(t) = sum c_k t^k` at the symbol `a` by
/// Horner's rule (pointwise products).
pub fn compose_power_series(coeffs: &[Rational], a: &PolySymbol) -> PolySymbol {
    let mut acc = PolySymbol::zero();
    for c in coeffs.iter().rev() {
        acc = &acc * a;
        acc += &PolySymbol::constant(c.clone());
    }
    acc
}

/// Coefficients of `f'` given those of `f`.
pub fn derivative_coeffs(coeffs: &[Rational]) -> Vec<Rational> {
    coeffs.iter().enumerate().skip(1).map(|(k, c)| c * Rational::from_integer(BigInt::from(k))).collect()
}

/// Weyl symbol of `f(A_hat)` through order `hbar^2`:
/// `f(A) - hbar^2 [ f''(A)/16 {A,A}_2 + f'''(A)/24 chain(A) ]`.
pub fn symbol_of_function(a: &PolySymbol, f: &[Rational], hbar_order: u32) -> Result<PolySymbol> {
    match hbar_order {
        0 => Ok(compose_power_series(f, a)),
        2 => {
            let f2 = derivative_coeffs(&derivative_coeffs(f));
            let f3 = derivative_coeffs(&f2);
            let circle = hessian_bracket(a);
            let chain = linear_chain(a);
            let corr = &(&compose_power_series(&f2, a) * &circle).scale_rational(&rat(1, 16))
                + &(&compose_power_series(&f3, a) * &chain).scale_rational(&rat(1, 24));
            Ok(&compose_power_series(f, a) - &corr.shift_hbar(2))
        }
        1 => Err(Error::InvalidArgument("hbar_order must be 0 or 2".into())),
        k => Err(Error::Unsupported(format!("hbar order {k}: only the expansion through hbar^2 is implemented"))),
    }
}

/// Randomised exact checks of the bracket and star-product identities.
pub mod identities {
    use super::*;
    use crate::polysym::Exponent;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use serde::Serialize;

    /// Random real symbol of `(x,p)`-degree at most `max_degree` with
    /// integer coefficients in `[-3, 3]`.
    pub fn random_symbol(rng: &mut impl Rng, max_degree: u32) -> PolySymbol {
        let mut s = PolySymbol::zero();
        for d in 0..=max_degree {
            for i in 0..=d {
                if rng.gen_bool(0.6) {
                    let c: i64 = rng.gen_range(-3..=3);
                    s.add_term(Exponent::new(i, d - i, 0), Coeff::real(Rational::from_integer(c.into())));
                }
            }
        }
        s
    }

    #[derive(Clone, Debug, Serialize, PartialEq)]
    pub struct IdentityCheck {
        pub name: String,
        pub trials: usize,
        pub failures: usize,
        /// First offending triple, formatted as `A | B | C`.
        pub first_failure: Option<String>,
    }

    impl IdentityCheck {
        pub fn passed(&self) -> bool {
            self.failures == 0
        }
    }

    #[derive(Clone, Debug, Serialize, PartialEq)]
    pub struct IdentityReport {
        pub seed: u64,
        pub count: usize,
        pub checks: Vec<IdentityCheck>,
    }

    impl IdentityReport {
        pub fn all_passed(&self) -> bool {
            self.checks.iter().all(IdentityCheck::passed)
        }
    }

    struct Tally {
        check: IdentityCheck,
    }

    impl Tally {
        fn new(name: &str) -> Self {
            Tally { check: IdentityCheck { name: name.into(), trials: 0, failures: 0, first_failure: None } }
        }

        fn record(&mut self, ok: bool, triple: &[&PolySymbol]) {
            self.check.trials += 1;
            if !ok {
                self.check.failures += 1;
                if self.check.first_failure.is_none() {
                    let parts: Vec<String> = triple.iter().map(|s| s.to_string()).collect();
                    self.check.first_failure = Some(parts.join(" | "));
                }
            }
        }
    }

    pub fn run_suite(seed: u64, count: usize) -> IdentityReport {
        run_suite_with(&standard_bracket, seed, count)
    }

    /// Runs every identity using `bracket` for all Moyal brackets.
    pub fn run_suite_with(bracket: &BracketFn, seed: u64, count: usize) -> IdentityReport {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut assoc = Tally::new("star associativity through hbar^4");
        let mut antisym = Tally::new("bracket antisymmetry {A,B}_n = (-1)^n {B,A}_n, n <= 5");
        let mut jacobi = Tally::new("Poisson Jacobi identity");
        let mut jacobi3 = Tally::new("second-order identity {A,{B,C}_3} + {A,{B,C}}_3 + cyclic = 0");
        let mut leibniz = Tally::new("Leibniz rule {A,BC} = {A,B}C + B{A,C}");
        for _ in 0..count {
            let a = random_symbol(&mut rng, 4);
            let b = random_symbol(&mut rng, 4);
            let c = random_symbol(&mut rng, 4);
            let triple = [&a, &b, &c];

            let ab = star_with(bracket, &a, &b, 4).symbol;
            let bc = star_with(bracket, &b, &c, 4).symbol;
            let left = star_with(bracket, &ab, &c, 4).symbol;
            let right = star_with(bracket, &a, &bc, 4).symbol;
            assoc.record(left == right, &triple);

            let mut ok = true;
            for n in 0..=5 {
                let lhs = bracket(&a, &b, n);
                let rhs = bracket(&b, &a, n);
                let rhs = if n % 2 == 1 { -rhs } else { rhs };
                ok &= lhs == rhs;
            }
            antisym.record(ok, &triple);

            let pb = |u: &PolySymbol, v: &PolySymbol| bracket(u, v, 1);
            let cyc = [(&a, &b, &c), (&b, &c, &a), (&c, &a, &b)];
            let mut jac = PolySymbol::zero();
            let mut jac3 = PolySymbol::zero();
            for (u, v, w) in cyc {
                jac += &pb(u, &pb(v, w));
                jac3 += &pb(u, &bracket(v, w, 3));
                jac3 += &bracket(u, &pb(v, w), 3);
            }
            jacobi.record(jac.is_zero(), &triple);
            jacobi3.record(jac3.is_zero(), &triple);

            let lhs = pb(&a, &(&b * &c));
            let rhs = &(&pb(&a, &b) * &c) + &(&b * &pb(&a, &c));
            leibniz.record(lhs == rhs, &triple);
        }
        IdentityReport {
            seed,
            count,
            checks: vec![assoc.check, antisym.check, jacobi.check, jacobi3.check, leibniz.check],
        }
    }

    /// A deliberately wrong bracket (extra pointwise term at odd order) for
    /// exercising failure reporting.
    pub fn corrupted_bracket(a: &PolySymbol, b: &PolySymbol, n: u32) -> PolySymbol {
        let good = moyal_bracket(a, b, BracketOrder(n));
        if n == 1 {
            &good + &(a * b)
        } else {
            good
        }
    }

    #[cfg(test)]
    mod tests {
        use super::*;

        #[test]
        fn suite_passes_small() {
            let r = run_suite(7, 10);
            assert!(r.all_passed(), "{r:?}");
            assert_eq!(r.checks.len(), 5);
        }

        #[test]
        fn empty_suite_is_vacuous_pass() {
            let r = run_suite(1, 0);
            assert!(r.all_passed());
            assert!(r.checks.iter().all(|c| c.trials == 0));
        }

        #[test]
        fn corrupted_bracket_is_caught() {
            let r = run_suite_with(&corrupted_bracket, 3, 5);
            assert!(!r.all_passed());
            let bad = r.checks.iter().find(|c| !c.passed()).unwrap();
            assert!(bad.first_failure.as_ref().unwrap().contains('|'));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polysym::{parse_expr, rat_int};

    fn e(s: &str) -> PolySymbol {
        parse_expr(s).unwrap()
    }

    #[test]
    fn bracket_examples() {
        assert_eq!(moyal_bracket(&e("I"), &e("I"), BracketOrder(2)), e("2"));
        assert_eq!(poisson(&e("x"), &e("p")), e("1"));
        assert_eq!(moyal_bracket(&e("I^2"), &e("I"), BracketOrder(2)), e("8*I"));
        assert_eq!(moyal_bracket(&e("x^3"), &e("p^3"), BracketOrder(3)), e("36"));
        assert_eq!(moyal_bracket(&e("x^2"), &e("p"), BracketOrder(0)), e("x^2*p"));
    }

    #[test]
    fn star_examples() {
        let ii = star(&e("I"), &e("I"), 4);
        assert_eq!(ii.symbol, e("I^2 - h^2/4"));
        assert!(ii.exact);
        assert_eq!(star(&e("x"), &e("p"), 2).symbol, e("x*p + i*h/2"));
        let b = e("x^3 - 2*p*x + 7");
        assert_eq!(star(&e("1"), &b, 0).symbol, b);
        // truncating below the natural order flags inexactness
        let t = star(&e("I"), &e("I"), 1);
        assert!(!t.exact);
        assert_eq!(t.symbol, e("I^2"));
    }

    #[test]
    fn commutator_examples() {
        assert_eq!(star_commutator(&e("x"), &e("p"), 5).symbol, e("i*h"));
        assert!(star_commutator(&e("I"), &e("I^2"), 5).symbol.is_zero());
        assert_eq!(star_commutator(&e("x^2"), &e("p^2"), 5).symbol, e("4*i*h*x*p"));
        let a = e("x^3 + x*p^2 - p");
        let b = e("p^4 - 2*x^2*p");
        let diff = &star_full(&a, &b) - &star_full(&b, &a);
        assert_eq!(star_commutator(&a, &b, 10).symbol, diff);
    }

    #[test]
    fn hessian_bracket_examples() {
        let h = e("p^2/(2*3) + x^4 - x^3/2");
        // 2 V''/m with m = 3
        assert_eq!(hessian_bracket(&h), e("(12x^2 - 3x)*2/3"));
        assert_eq!(hessian_bracket(&e("I")), e("2"));
        assert_eq!(hessian_bracket(&e("I^2")), e("24*I^2"));
    }

    #[test]
    fn chain_diagram_of_action() {
        assert_eq!(linear_chain(&e("I")), e("2*I"));
    }

    #[test]
    fn symbol_of_function_examples() {
        let sq = [rat_int(0), rat_int(0), rat_int(1)];
        let cube = [rat_int(0), rat_int(0), rat_int(0), rat_int(1)];
        assert_eq!(symbol_of_function(&e("I"), &sq, 2).unwrap(), e("I^2 - h^2/4"));
        assert_eq!(symbol_of_function(&e("I"), &cube, 2).unwrap(), e("I^3 - 5/4*h^2*I"));
        let a = e("x^3 - p*x");
        assert_eq!(symbol_of_function(&a, &[rat_int(0), rat_int(1)], 2).unwrap(), a);
        assert!(matches!(symbol_of_function(&a, &sq, 4), Err(Error::Unsupported(_))));
        assert_eq!(symbol_of_function(&e("I"), &[rat(1, 2), rat_int(3)], 0).unwrap(), e("1/2 + 3I"));
    }

    #[test]
    fn symbol_of_function_matches_star_powers() {
        for a in [e("I"), e("I + x")] {
            let a2 = star_full(&a, &a);
            let a3 = star_full(&a2, &a);
            let sq = [rat_int(0), rat_int(0), rat_int(1)];
            let cube = [rat_int(0), rat_int(0), rat_int(0), rat_int(1)];
            assert_eq!(symbol_of_function(&a, &sq, 2).unwrap(), a2.truncate_hbar(2));
            assert_eq!(symbol_of_function(&a, &cube, 2).unwrap(), a3.truncate_hbar(2));
        }
    }
}
