//! Properties of price surfaces and payoff projections.

mod common;

use common::*;
use heston_galerkin::evolution::SolveConfig;
use heston_galerkin::oracle::{closed_form_price, OptionKind};
use heston_galerkin::params::{transform, ModelParams};
use heston_galerkin::pricing::*;

fn setup(n: usize, gamma: f64) -> PdeSetup {
    let (_, w, _) = benchmark_weight(gamma);
    let basis = pricing_basis(n, &w);
    let grid = basis.grid(&w).unwrap();
    PdeSetup { basis, grid, weight: w }
}

fn cn(dt: f64, t_end: f64) -> SolveConfig {
    let mut cfg = SolveConfig::implicit_euler(dt, t_end);
    cfg.theta_scheme = 0.5;
    cfg
}

fn wide_setup(n: usize, gamma: f64) -> PdeSetup {
    let (_, w, _) = benchmark_weight(gamma);
    let basis = heston_galerkin::basis::TensorBasis::with_scales(n, n, 2.0, 6.0 * w.mu).unwrap();
    let grid = basis.grid(&w).unwrap();
    PdeSetup { basis, grid, weight: w }
}

#[test]
fn put_projection_residual_decreases() {
    let mut last = f64::INFINITY;
    for n in [8, 16, 32] {
        let s = wide_setup(n, 0.5);
        let p = project_payoff(&Payoff::Put { strike: 100.0 }, &s.basis, &s.grid, &s.weight).unwrap();
        let r = p.residual / p.norm;
        assert!(r < 0.7 * last, "n = {n}: {r} against {last}");
        last = r;
    }
    assert!(last < 0.06, "{last}");
}

#[test]
fn surface_at_expiry_is_the_payoff() {
    let m = benchmark();
    let s = setup(8, 0.5);
    let run = solve_pde(&m, &Payoff::Put { strike: 100.0 }, &s, &cn(0.05, 0.1), Method::Direct, 0.04).unwrap();
    let mut sol = run.final_solution();
    sol.t = 0.0;
    let x = [-0.5, 0.0, 0.5];
    let surf = price_surface(&sol, &Payoff::Put { strike: 100.0 }, &m, &x, &[0.04]).unwrap();
    for (i, xv) in x.iter().enumerate() {
        assert_eq!(surf.price[i][0], 100.0 * (1.0 - xv.exp()).max(0.0));
    }
}

#[test]
fn discounting_and_zero_rate() {
    let m0 = benchmark();
    let s = setup(16, 0.5);
    let run = solve_pde(&m0, &Payoff::Put { strike: 100.0 }, &s, &cn(0.01, 0.5), Method::Residual, 0.04).unwrap();
    let sol = run.final_solution();
    let x = [-0.2, 0.0, 0.2];
    let v = [0.02, 0.04];
    let plain = price_surface(&sol, &Payoff::Put { strike: 100.0 }, &m0, &x, &v).unwrap();
    for (i, xv) in x.iter().enumerate() {
        for (k, vk) in v.iter().enumerate() {
            assert_eq!(plain.price[i][k], sol.value(*xv, vk / 0.3).unwrap());
        }
    }
    let m1 = ModelParams { r: 0.03, q: 0.03, ..m0 };
    let run1 = solve_pde(&m1, &Payoff::Put { strike: 100.0 }, &s, &cn(0.01, 0.5), Method::Residual, 0.04).unwrap();
    let sol1 = run1.final_solution();
    let disc = price_surface(&sol1, &Payoff::Put { strike: 100.0 }, &m1, &x, &v).unwrap();
    let f = (-0.03f64 * 0.5).exp();
    for (i, xv) in x.iter().enumerate() {
        for (k, vk) in v.iter().enumerate() {
            assert!((disc.price[i][k] - f * sol1.value(*xv, vk / 0.3).unwrap()).abs() < 1e-12);
        }
    }
}

#[test]
fn parameter_mismatch_is_refused() {
    let m = benchmark();
    let s = setup(6, 0.5);
    let run = solve_pde(&m, &Payoff::Put { strike: 100.0 }, &s, &cn(0.1, 0.2), Method::Direct, 0.04).unwrap();
    let other = ModelParams { rho: -0.3, ..m };
    let err = price_surface(&run.final_solution(), &Payoff::Put { strike: 100.0 }, &other, &[0.0], &[0.04]);
    assert!(matches!(err, Err(heston_galerkin::Error::Mismatch(_))));
}

#[test]
fn put_surface_bounds_on_central_band() {
    let m = benchmark();
    let s = setup(32, 0.5);
    let run = solve_pde(&m, &Payoff::Put { strike: 100.0 }, &s, &cn(2e-3, 0.5), Method::Residual, 0.04).unwrap();
    let x: Vec<f64> = (0..=20).map(|i| -0.5 + 0.05 * i as f64).collect();
    let v: Vec<f64> = (1..=8).map(|k| 0.02 * k as f64).collect();
    let surf = price_surface(&run.final_solution(), &Payoff::Put { strike: 100.0 }, &m, &x, &v).unwrap();
    assert!(surf.is_consistent());
    let upper = 100.0 * (m.r * m.maturity).exp();
    let lower_tol = 2e-3 * m.strike;
    assert!(surf.negative_nodes(lower_tol).is_empty());
    assert!(surf.price.iter().flatten().all(|p| *p <= upper));
}

#[test]
fn put_prices_track_closed_form_across_the_band() {
    let m = benchmark();
    let s = setup(32, 0.5);
    let run = solve_pde(&m, &Payoff::Put { strike: 100.0 }, &s, &cn(2e-3, 0.5), Method::Residual, 0.04).unwrap();
    let sol = run.final_solution();
    for x in [-0.1, 0.0, 0.1] {
        for v in [0.03, 0.04, 0.06] {
            let cf = closed_form_price(&m, 100.0 * f64::exp(x), v, OptionKind::Put).unwrap();
            let pde = sol.value(x, v / m.sigma).unwrap();
            assert!((pde - cf).abs() < 0.1, "x {x} v {v}: {pde} vs {cf}");
        }
    }
}

#[test]
fn derivative_matches_centered_difference() {
    let m = benchmark();
    let s = setup(16, 0.5);
    let run = solve_pde(&m, &Payoff::Put { strike: 100.0 }, &s, &cn(0.01, 0.5), Method::Residual, 0.04).unwrap();
    let sol = run.final_solution();
    for (x, xi) in [(0.0, 0.13), (0.1, 0.3), (-0.2, 0.2)] {
        let d = sol.du_dxi(x, xi).unwrap();
        let fd = |h: f64| (sol.value(x, xi + h).unwrap() - sol.value(x, xi - h).unwrap()) / (2.0 * h);
        let (e1, e2) = ((fd(2e-4) - d).abs(), (fd(1e-4) - d).abs());
        assert!(e2 < 1e-4 * d.abs().max(1.0), "({x}, {xi}): {d} vs {}", fd(1e-4));
        assert!(e1 / e2 > 3.0, "not second order: {e1} {e2}");
    }
}

#[test]
fn put_call_consistency_with_gamma_above_two() {
    let m = benchmark();
    let s = setup(16, 2.5);
    let cfg = cn(5e-3, 0.5);
    let solve = |p: &Payoff| solve_pde(&m, p, &s, &cfg, Method::Residual, 0.04).unwrap().final_solution();
    let rc = solve(&Payoff::Call { strike: 100.0 });
    let rp = solve(&Payoff::Put { strike: 100.0 });
    let t = transform(&m).unwrap();
    for i in 0..=10 {
        let x = -0.5 + 0.1 * i as f64;
        for xi in [0.5 * t.theta_sigma, t.theta_sigma, 2.0 * t.theta_sigma] {
            let gap = rc.value(x, xi).unwrap() - rp.value(x, xi).unwrap();
            assert!((gap - 100.0 * (x.exp() - 1.0)).abs() < 1e-9, "({x}, {xi}): {gap}");
        }
    }
}

#[test]
fn completeness_report_on_solved_call_is_well_formed() {
    let m = benchmark();
    let s = setup(12, 2.5);
    let mut cfg = cn(0.01, 0.5);
    cfg.keep_states = true;
    let run = solve_pde(&m, &Payoff::Call { strike: 100.0 }, &s, &cfg, Method::Residual, 0.04).unwrap();
    let sols: Vec<_> = [0.25, 0.5].iter().map(|&t| run.solution_at(t).unwrap()).collect();
    assert!((sols[0].t - 0.25).abs() < 1e-12 && (sols[1].t - 0.5).abs() < 1e-12);
    let rep = completeness_report(&sols, 0.01).unwrap();
    assert_eq!(rep.entries.len(), 2);
    for e in &rep.entries {
        assert_eq!(e.sign_map.len(), 61);
        assert!(e.sign_map.iter().all(|r| r.len() == 61));
        assert!((0.0..=1.0).contains(&e.zero_set_fraction));
    }
    let (x, xi, d) = interior_derivative(&sols[1]).unwrap();
    let centre = (x.len() / 2, xi.len() / 2);
    assert!(d[centre] > 0.0);
    let json = serde_json::to_string(&rep).unwrap();
    assert!(json.contains("zero_set_fraction"));
}

#[test]
fn surface_csv_columns() {
    let m = benchmark();
    let s = setup(6, 0.5);
    let run = solve_pde(&m, &Payoff::Put { strike: 100.0 }, &s, &cn(0.1, 0.2), Method::Direct, 0.04).unwrap();
    let surf = price_surface(&run.final_solution(), &Payoff::Put { strike: 100.0 }, &m, &[0.0, 0.1], &[0.04]).unwrap();
    let mut buf = Vec::new();
    surf.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("x,v,p,du_dxi\n"));
    assert_eq!(text.lines().count(), 3);
}
