use std::f64::consts::PI;

use super::*;
use crate::error::Error;
use crate::normalform::LinearSymplectic;
use crate::polysym::parse_expr;

fn sym(s: &str) -> SmoothHamiltonian {
    SmoothHamiltonian::from_symbol(&parse_expr(s).unwrap(), 1.0).unwrap()
}

fn engine(h: &SmoothHamiltonian) -> OrbitEngine {
    let fp = find_fixed_point(h, (0.0, 0.0)).unwrap();
    OrbitEngine::new(h, &fp).unwrap()
}

#[test]
fn harmonic_orbit() {
    let h = sym("I");
    let fp = find_fixed_point(&h, (0.1, 0.1)).unwrap();
    let o = trace_orbit(&h, 0.5, &fp).unwrap();
    assert!((o.period - 2.0 * PI).abs() < 1e-12);
    assert!((o.action - 0.5).abs() < 1e-14);
    assert!((o.frequency - 1.0).abs() < 1e-12);
    let flow = o.flow.unwrap();
    assert!((flow.period - 2.0 * PI).abs() < 1e-9, "{}", flow.period);
    assert!((flow.action - 0.5).abs() < 1e-9);
    assert!(flow.max_energy_drift < 1e-10);
    assert!(o.samples.len() > 10);
}

#[test]
fn nonlinear_symbols_in_action() {
    let e = engine(&sym("I^2"));
    let o = e.orbit_at_energy(4.0).unwrap();
    assert!((o.action - 2.0).abs() < 1e-12);
    assert!((o.frequency - 4.0).abs() < 1e-10);

    let e = engine(&sym("I^3"));
    let o = e.orbit_at_energy(27.0 / 8.0).unwrap();
    assert!((o.action - 1.5).abs() < 1e-12);
    assert!((o.frequency - 27.0 / 4.0).abs() < 1e-9);
}

#[test]
fn non_monotone_energy_uses_signed_frequency() {
    // E(A) = A^3 - 1.25 A turns over at A^2 = 5/12
    let e = engine(&sym("I^3 - 5/4*I"));
    let fp = e.fixed_point().clone();
    assert_eq!(fp.classification, Classification::GenericMaximum);
    // work on -H which has a minimum
    let neg = e.hamiltonian().negated();
    let e = OrbitEngine::new(&neg, &fp.negated()).unwrap();
    let o = e.orbit_of_action(1.5).unwrap();
    let exact = -(1.5f64.powi(3) - 1.25 * 1.5);
    assert!((o.energy - exact).abs() < 1e-12, "{}", o.energy);
    assert!((o.frequency - -(3.0 * 2.25 - 1.25)).abs() < 1e-9);
}

#[test]
fn quartic_averages() {
    let e = engine(&sym("I"));
    let o = e.orbit_of_action(0.7).unwrap();
    let x2 = orbit_average(&o, |x, _| x * x);
    let x4 = orbit_average(&o, |x, _| x.powi(4));
    assert!((x2 - 0.7).abs() < 1e-13);
    assert!((x4 - 1.5 * 0.49).abs() < 1e-13);
}

#[test]
fn anharmonic_flow_agrees_with_contour() {
    let h = sym("p^2/2 + x^2/2 + x^3/5");
    let fp = find_fixed_point(&h, (0.1, 0.0)).unwrap();
    let o = trace_orbit(&h, 0.3, &fp).unwrap();
    let flow = o.flow.unwrap();
    assert!((flow.period - o.period).abs() < 1e-8 * o.period);
    assert!((flow.action - o.action).abs() < 1e-8 * o.action);
    assert!(flow.max_energy_drift < 1e-10);
    let (a, w) = action_and_frequency(&o);
    assert!((a - o.action).abs() < 1e-14);
    assert!((w - o.frequency).abs() < 1e-12);
}

#[test]
fn frequency_matches_energy_derivative() {
    let e = engine(&sym("p^2/2 + x^2/2 + x^4/10"));
    let a = 0.8;
    let d = 1e-4;
    let ep = e.energy_of_action(a + d).unwrap();
    let em = e.energy_of_action(a - d).unwrap();
    let w = e.orbit_of_action(a).unwrap().frequency;
    assert!(((ep - em) / (2.0 * d) - w).abs() < 1e-6);
}

#[test]
fn action_grows_with_energy_and_round_trips() {
    let e = engine(&sym("p^2/2 + x^2/2 + x^4/10"));
    let mut last = 0.0;
    for k in 1..8 {
        let energy = 0.2 * k as f64;
        let o = e.orbit_at_energy(energy).unwrap();
        assert!(o.action > last);
        last = o.action;
        let back = e.energy_of_action(o.action).unwrap();
        assert!((back - energy).abs() < 1e-9);
    }
}

#[test]
fn orientation_does_not_change_action() {
    let e = engine(&sym("p^2/2 + 2*x^2"));
    let o = e.orbit_at_energy(1.0).unwrap();
    let r = o.reversed();
    let (a, w) = action_and_frequency(&r);
    assert!(a > 0.0);
    assert!((a - o.action).abs() < 1e-14);
    assert!((w - 2.0).abs() < 1e-10);
}

#[test]
fn canonical_maps_preserve_action_and_frequency() {
    let h = sym("p^2/2 + x^2/2 + x^3/5");
    let s = LinearSymplectic::from_rotation_squeeze(0.4, 1.7, -1.1).unwrap();
    let hs = h.apply_linear_symplectic(&s).unwrap();
    let base = engine(&h).orbit_at_energy(0.25).unwrap();
    let moved = engine(&hs).orbit_at_energy(0.25).unwrap();
    assert!((base.action - moved.action).abs() < 1e-12);
    assert!((base.frequency - moved.frequency).abs() < 1e-10);
}

#[test]
fn window_and_separatrix() {
    // cubic well with a saddle at x = -1, E = 1/6
    let h = sym("p^2/2 + x^2/2 + x^3/3");
    let fp = find_fixed_point(&h, (0.1, 0.0)).unwrap();
    let e = OrbitEngine::new(&h, &fp).unwrap().with_ceiling(Some(0.15));
    let max = e.max_action().unwrap().unwrap();
    assert!(matches!(e.orbit_of_action(max * 1.01), Err(Error::OutOfWindow { .. })));
    assert!(e.orbit_of_action(max * 0.99).is_ok());
    assert!(e.orbit_at_energy(0.2).is_err());
}

#[test]
fn saddle_has_no_orbit_family() {
    let h = sym("x*p");
    let fp = find_fixed_point(&h, (0.1, 0.1)).unwrap();
    assert!(matches!(OrbitEngine::new(&h, &fp), Err(Error::Saddle { .. })));
}
