//! Weighted quadrature and the inequality checkers against closed-form Gamma integrals.

mod common;

use approx::assert_relative_eq;
use common::*;
use heston_galerkin::quadspace::*;
use num_complex::Complex64;
use proptest::prelude::*;
use statrs::function::gamma::gamma;

fn default_grid() -> QuadratureGrid {
    QuadratureGrid::new(&GridSpec::default(), &worked_weight()).unwrap()
}

/// `int e^{-2|x|} e^{-gamma |x|} dx`.
fn x_integral(gamma_: f64) -> f64 {
    2.0 / (2.0 + gamma_)
}

/// `int_0^inf xi^p e^{-(2 + mu) xi} dxi`.
fn xi_moment(p: f64, mu: f64) -> f64 {
    gamma(p + 1.0) / (2.0 + mu).powf(p + 1.0)
}

#[test]
fn weight_formula_values() {
    let w = worked_weight();
    assert_relative_eq!(weight_eval(0.0, 1.0, &w).unwrap(), 0.082_084_998_623_898_8, max_relative = 1e-14);
    assert_eq!(weight_eval(1.3, 0.4, &w).unwrap(), weight_eval(-1.3, 0.4, &w).unwrap());
    let r = weight_eval(0.0, 1e-6, &w).unwrap() / weight_eval(0.0, 2e-6, &w).unwrap();
    assert_relative_eq!(r, 0.5, max_relative = 1e-5);
    assert!(weight_eval(0.0, 0.0, &w).is_err());
    assert!(weight_eval(0.0, -1.0, &w).is_err());
}

#[test]
fn inner_h_of_one_equals_gamma_integral() {
    let w = worked_weight();
    let one = WeightedFunction::with_partials(|_, _| Complex64::new(1.0, 0.0), |_, _| Complex64::new(0.0, 0.0), |_, _| Complex64::new(0.0, 0.0));
    let g = default_grid();
    let exact = (2.0 / w.gamma) * gamma(w.beta) / w.mu.powf(w.beta);
    assert_relative_eq!(exact, 0.16, max_relative = 1e-15);
    assert_relative_eq!(inner_h(&one, &one, &g, &w).re, exact, max_relative = 1e-11);
    assert_eq!(inner_v(&one, &one, &g, &w).unwrap(), inner_h(&one, &one, &g, &w));
}

#[test]
fn refinement_changes_inner_h_of_one_little() {
    let w = worked_weight();
    let one = WeightedFunction::real(|_, _| 1.0);
    let coarse = QuadratureGrid::new(&GridSpec::default(), &w).unwrap();
    let fine = QuadratureGrid::new(&GridSpec::default().refined(), &w).unwrap();
    let (a, b) = (inner_h(&one, &one, &coarse, &w).re, inner_h(&one, &one, &fine, &w).re);
    assert!(rel(a, b) < 1e-10, "{a} vs {b}");
}

#[test]
fn worked_hardy_values() {
    let w = worked_weight();
    let rep = check_hardy(&worked_function(), &default_grid(), &w).unwrap();
    let lhs = x_integral(w.gamma) * xi_moment(w.beta - 2.0, w.mu);
    let rhs = x_integral(w.gamma) * (8.0 + 2.0 * w.mu * w.mu) / (w.beta - 1.0).powi(2) * xi_moment(w.beta, w.mu);
    assert_relative_eq!(lhs, 0.111_11, max_relative = 1e-4);
    assert_relative_eq!(rhs, 0.224_97, max_relative = 1e-4);
    assert_relative_eq!(rep.lhs, lhs, max_relative = 1e-6);
    assert_relative_eq!(rep.rhs, rhs, max_relative = 1e-6);
    assert!(rep.pass);
}

#[test]
fn worked_sobolev_values() {
    let w = worked_weight();
    let rep = check_sobolev(&worked_function(), &default_grid(), &w).unwrap();
    let lhs = x_integral(w.gamma) * xi_moment(w.beta, w.mu);
    let rhs = x_integral(w.gamma) * ((2.0 / w.mu).powi(2) * xi_moment(w.beta, w.mu) + 2.0 * w.beta / w.mu * xi_moment(w.beta - 1.0, w.mu));
    assert_relative_eq!(lhs, 0.010_974, max_relative = 1e-4);
    assert_relative_eq!(rhs, 0.046_529, max_relative = 1e-4);
    assert_relative_eq!(rep.lhs, lhs, max_relative = 1e-6);
    assert_relative_eq!(rep.rhs, rhs, max_relative = 1e-6);
    assert!(rep.pass);
}

#[test]
fn worked_traces_vanish() {
    let rep = check_traces(&worked_function(), &default_grid(), &worked_weight());
    assert!(rep.pass, "{rep:?}");
    assert!(rep.l0.unwrap().abs() < 1e-10);
    assert!(rep.l_infinity.unwrap().abs() < 1e-10);
    assert!(rep.l_x.unwrap().abs() < 1e-10);
}

#[test]
fn hardy_refused_at_beta_one() {
    let w = heston_galerkin::params::WeightParams::new(1.0, 2.0, 2.5).unwrap();
    let g = QuadratureGrid::new(&GridSpec::default(), &w).unwrap();
    assert!(check_hardy(&worked_function(), &g, &w).is_err());
}

#[test]
fn family_passes_every_check() {
    let w = worked_weight();
    let g = default_grid();
    let family = function_family();
    assert_eq!(family.len(), 20);
    for (name, u) in &family {
        assert!(check_hardy(u, &g, &w).unwrap().pass, "{name}: hardy");
        assert!(check_sobolev(u, &g, &w).unwrap().pass, "{name}: sobolev");
        assert!(check_traces(u, &g, &w).pass, "{name}: traces");
    }
}

#[test]
fn equivalent_norm_sandwich() {
    let w = worked_weight();
    let g = default_grid();
    let c_eq = equivalence_constant(&w);
    for (name, u) in &function_family() {
        let v = norm_v_sq(u, &g, &w).unwrap();
        let sharp = norm_v_sharp_sq(u, &g, &w).unwrap();
        assert!(v <= sharp, "{name}");
        assert!(sharp <= c_eq * v, "{name}: {sharp} > {c_eq} * {v}");
    }
}

#[test]
fn inner_products_of_family_are_conjugate_symmetric() {
    let w = worked_weight();
    let g = default_grid();
    let fam = function_family();
    let twisted = WeightedFunction::with_partials(
        |x, s| Complex64::new(0.0, x) * (-(x * x) - s).exp(),
        |x, s| Complex64::new(0.0, 1.0 - 2.0 * x * x) * (-(x * x) - s).exp(),
        |x, s| Complex64::new(0.0, -x) * (-(x * x) - s).exp(),
    );
    for (_, u) in fam.iter().take(5) {
        assert_eq!(inner_h(u, &twisted, &g, &w), inner_h(&twisted, u, &g, &w).conj());
        assert_eq!(inner_v(u, &twisted, &g, &w).unwrap(), inner_v(&twisted, u, &g, &w).unwrap().conj());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn hardy_and_sobolev_hold_for_gaussian_bumps(c in -1.0f64..1.0, a in 0.3f64..3.0, b in 0.2f64..3.0, k in 0usize..3) {
        let w = worked_weight();
        let g = default_grid();
        let p = k as i32;
        let u = WeightedFunction::with_partials(
            move |x, s| Complex64::new((-a * (x - c).powi(2)).exp() * s.powi(p) * (-b * s).exp(), 0.0),
            move |x, s| Complex64::new(-2.0 * a * (x - c) * (-a * (x - c).powi(2)).exp() * s.powi(p) * (-b * s).exp(), 0.0),
            move |x, s| {
                let ds = if p == 0 { 0.0 } else { p as f64 * s.powi(p - 1) } - b * s.powi(p);
                Complex64::new((-a * (x - c).powi(2)).exp() * ds * (-b * s).exp(), 0.0)
            },
        );
        prop_assert!(check_hardy(&u, &g, &w).unwrap().pass);
        prop_assert!(check_sobolev(&u, &g, &w).unwrap().pass);
        let h = norm_h_sq(&u, &g, &w);
        prop_assert!(h > 0.0);
    }
}
