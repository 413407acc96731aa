//! Cross-module consistency: orbits against the normal form, semiclassical
//! levels against the oracles.

use bsq_core::catalog::{Catalog, Params};
use bsq_core::dynamics::{find_fixed_point, OrbitEngine, SmoothHamiltonian};
use bsq_core::normalform::birkhoff_series;
use bsq_core::oracle::{fock_spectrum, grid_spectrum, FockOptions, GridOptions};
use bsq_core::polysym::parse_expr;
use bsq_core::spectrum::model_spectrum;

fn engine(text: &str) -> (OrbitEngine, f64) {
    let sym = parse_expr(text).unwrap();
    let h = SmoothHamiltonian::from_symbol(&sym, 1.0).unwrap();
    let fp = find_fixed_point(&h, (0.0, 0.0)).unwrap();
    (OrbitEngine::new(&h, &fp).unwrap(), fp.energy)
}

#[test]
fn cubic_second_coefficient_is_half_the_energy_curvature() {
    let text = "p^2/2 + x^2/2 + x^3/100";
    let a2 = birkhoff_series(&parse_expr(text).unwrap(), 2).unwrap().coefficients[1];
    let (eng, _) = engine(text);
    let (a, h) = (1e-3, 2e-4);
    let e = |s: f64| eng.energy_of_action(s).unwrap();
    let curvature = (e(a + h) - 2.0 * e(a) + e(a - h)) / (h * h);
    // E = A + a2 A^2 + a3 A^3: the difference quotient carries 3 a3 A
    let a3 = birkhoff_series(&parse_expr(text).unwrap(), 3).unwrap().coefficients[2];
    let half = 0.5 * curvature - 3.0 * a3 * a;
    assert!(((half - a2) / a2).abs() < 1e-6, "{half} vs {a2}");
}

#[test]
fn normal_form_matches_orbits_to_the_next_order() {
    for (text, order) in [("p^2/2 + x^2/2 + x^4/10", 2), ("p^2/2 + x^2/2 + x^3/10", 2), ("p^2/2 + x^2/2 + x^3/10", 3)] {
        let series = birkhoff_series(&parse_expr(text).unwrap(), order).unwrap();
        let (eng, e_fp) = engine(text);
        let actions = [1e-2, 1e-3, 1e-4];
        let gaps: Vec<f64> =
            actions.iter().map(|&a| (series.eval(a) - (eng.energy_of_action(a).unwrap() - e_fp)).abs()).collect();
        let slope = (gaps[0] / gaps[2]).ln() / (actions[0] / actions[2]).ln();
        assert!(slope > order as f64 + 0.5, "{text} order {order}: slope {slope}, gaps {gaps:?}");
    }
}

#[test]
fn corrected_levels_beat_leading_order_against_fock() {
    let model = Catalog::builtin().build("perturbed_quartic", &Params::new()).unwrap();
    let hbar = 0.1;
    let s = model_spectrum(model.as_ref(), hbar, 0..=10, 2, None).unwrap();
    let oracle = fock_spectrum(&model.symbol().unwrap(), hbar, 11, &FockOptions::default()).unwrap();
    for l in &s.levels {
        let e = oracle.eigenvalues[l.n as usize];
        assert!((l.e2 - e).abs() < (l.e0 - e).abs(), "n = {}", l.n);
        assert!((l.e2 - e).abs() < 1e-5, "n = {}: {}", l.n, (l.e2 - e).abs());
    }
}

#[test]
fn shifted_and_scaled_wells() {
    let cat = Catalog::builtin();
    let mut params = Params::new();
    params.insert("x0".into(), 1.5);
    let shifted = cat.build("shifted_harmonic", &params).unwrap();
    let s = model_spectrum(shifted.as_ref(), 0.3, 0..=4, 2, None).unwrap();
    assert!((s.fixed_point.x - 1.5).abs() < 1e-12);
    for l in &s.levels {
        assert!((l.e2 - 0.3 * (l.n as f64 + 0.5)).abs() < 1e-12);
    }
    // Morse against the grid: exact Bohr-Sommerfeld levels for this potential
    let morse = cat.build("morse", &Params::new()).unwrap();
    let s = model_spectrum(morse.as_ref(), 0.05, 0..=4, 2, None).unwrap();
    let kp = morse.kinetic_potential(0.05).unwrap();
    let g = grid_spectrum(&|x| kp.v(x), kp.mass, 0.05, 5, &GridOptions::default()).unwrap();
    for l in &s.levels {
        assert!(
            (l.e2 - g.eigenvalues[l.n as usize]).abs() < 1e-8,
            "n = {}: {} vs {}",
            l.n,
            l.e2,
            g.eigenvalues[l.n as usize]
        );
    }
}

#[test]
fn oracle_estimates_shrink_under_doubling() {
    let opts = GridOptions { points: Some(32), domain: Some((-8.0, 8.0)), max_doublings: 4, ..GridOptions::default() };
    let s = grid_spectrum(&|x: f64| 0.5 * x * x + 0.1 * x.powi(4), 1.0, 0.5, 6, &opts).unwrap();
    assert!(s.history.len() >= 2, "{:?}", s.history);
    assert!(s.history.windows(2).all(|w| w[1] <= w[0]), "{:?}", s.history);
    assert!(s.estimates.iter().all(|e| *e <= opts.tolerance));
}

#[test]
fn spectrum_serialisation_is_deterministic() {
    let model = Catalog::builtin().build("perturbed_quartic", &Params::new()).unwrap();
    let a = model_spectrum(model.as_ref(), 0.25, 0..=6, 2, None).unwrap();
    let b = model_spectrum(model.as_ref(), 0.25, 0..=6, 2, None).unwrap();
    assert_eq!(a.to_json(), b.to_json());
    let (mut x, mut y) = (Vec::new(), Vec::new());
    a.write_csv(&mut x).unwrap();
    b.write_csv(&mut y).unwrap();
    assert_eq!(x, y);
    assert_eq!(a.levels.iter().map(|l| l.n).collect::<Vec<_>>(), (0..=6).collect::<Vec<_>>());
}
