//! The subcommands. Each returns a [`Status`] after writing its artifacts.

use std::io::Write;

use anyhow::{bail, Result};
use heston_galerkin::evolution::{evolve, evolve_along_path, evolve_shifted, shifted_initial, smallness_condition, Evolution, SmallnessReport};
use heston_galerkin::operator::{assemble, boundary_terms, certify_bounded, certify_garding, CertReport, OperatorMatrices};
use heston_galerkin::oracle::{closed_form_price, mc_price, OptionKind};
use heston_galerkin::params::{transform, validate_with_beta, AdmissibilityReport, TransformedParams};
use heston_galerkin::pricing::{completeness_report, interior_derivative, price_surface, project_payoff, solve_pde, Payoff, PdeSetup};
use heston_galerkin::quadspace::{
    check_hardy, check_sobolev, check_traces, equivalence_constant, norm_v_sharp_sq, norm_v_sq, standard_family, QuadratureGrid,
};
use heston_galerkin::Error;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;
use crate::output::{num, Artifacts};

/// Outcome of a subcommand that completed its computation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Status {
    /// Every check passed.
    Pass,
    /// The parameters are inadmissible.
    Inadmissible(String),
    /// A certified bound or requested tolerance was violated.
    Violation(String),
}

fn admissibility(cfg: &RunConfig) -> Result<(TransformedParams, AdmissibilityReport)> {
    cfg.model.validate()?;
    let t = transform(&cfg.model)?;
    let rep = validate_with_beta(&t, cfg.gamma(), cfg.weight.beta);
    Ok((t, rep))
}

fn failed_conditions(rep: &AdmissibilityReport) -> String {
    let names: Vec<&str> = [&rep.feller, &rep.kappa_bound, &rep.mu_positive, &rep.beta_range]
        .iter()
        .filter(|c| !c.pass)
        .map(|c| c.name.as_str())
        .collect();
    format!("inadmissible parameters, failing {}", names.join(", "))
}

/// Admissibility report of the configured parameters, or the status to return early with.
fn admissible(cfg: &RunConfig, out: &mut Artifacts<'_>) -> Result<std::result::Result<(TransformedParams, AdmissibilityReport), Status>> {
    let (t, rep) = admissibility(cfg)?;
    if !rep.admissible {
        out.json("admissibility.json", &rep)?;
        return Ok(Err(Status::Inadmissible(failed_conditions(&rep))));
    }
    Ok(Ok((t, rep)))
}

fn payoff(cfg: &RunConfig) -> Payoff {
    Payoff::vanilla(cfg.pricing.option, cfg.model.strike)
}

struct Discrete {
    setup: PdeSetup,
    mats: OperatorMatrices,
}

fn discretize(cfg: &RunConfig, t: &TransformedParams, rep: &AdmissibilityReport) -> Result<Discrete> {
    let w = rep.weight;
    let basis = cfg.basis.build(&w)?;
    let grid = basis.grid(&w)?;
    let mats = assemble(&basis, &grid, t, &w)?;
    Ok(Discrete {
        setup: PdeSetup { basis, grid, weight: w },
        mats,
    })
}

/// `validate`: admissibility report.
pub fn validate(cfg: &RunConfig, out: &mut Artifacts<'_>) -> Result<Status> {
    let (_, rep) = admissibility(cfg)?;
    out.json("admissibility.json", &rep)?;
    println!("{}", serde_json::to_string_pretty(&rep)?);
    Ok(if rep.admissible { Status::Pass } else { Status::Inadmissible(failed_conditions(&rep)) })
}

#[derive(Serialize)]
struct CheckSummary<'a> {
    inequality_failures: Vec<String>,
    certifications: &'a [CertReport],
    boundary: heston_galerkin::operator::BoundaryReport,
    equivalence_constant: f64,
}

/// `check`: weighted inequality suite and coercivity certification.
pub fn check(cfg: &RunConfig, out: &mut Artifacts<'_>) -> Result<Status> {
    let (t, rep) = match admissible(cfg, out)? {
        Ok(v) => v,
        Err(s) => return Ok(s),
    };
    let w = rep.weight;
    let grid = QuadratureGrid::new(&cfg.grid, &w)?;
    let c_eq = equivalence_constant(&w);
    let mut rows = Vec::new();
    for (name, f) in standard_family() {
        for r in [check_hardy(&f, &grid, &w)?, check_sobolev(&f, &grid, &w)?, check_traces(&f, &grid, &w)] {
            rows.push((name.clone(), r.name.clone(), r.lhs, r.rhs, r.pass));
        }
        let v = norm_v_sq(&f, &grid, &w)?;
        let sharp = norm_v_sharp_sq(&f, &grid, &w)?;
        rows.push((name.clone(), "norm_equivalence".into(), sharp, c_eq * v, v <= sharp && sharp <= c_eq * v));
    }
    out.csv("inequalities.csv", |wr| {
        let mut c = csv::Writer::from_writer(wr);
        c.write_record(["function", "check", "lhs", "rhs", "pass"])?;
        for (f, k, l, r, p) in &rows {
            c.write_record([f.as_str(), k.as_str(), &num(*l), &num(*r), &p.to_string()])?;
        }
        c.flush()?;
        Ok(())
    })?;

    let d = discretize(cfg, &t, &rep)?;
    let certs = vec![
        certify_garding(&d.mats, &rep.constants, cfg.check.trials, cfg.check.seed)?,
        certify_bounded(&d.mats, &rep.constants, cfg.check.trials, cfg.check.seed.wrapping_add(1))?,
    ];
    out.csv("certification.csv", |wr| {
        let mut c = csv::Writer::from_writer(wr);
        c.write_record(["name", "trials", "worst_slack", "bound", "subspace_value", "pass"])?;
        for r in &certs {
            c.write_record([
                r.name.clone(),
                r.trials.to_string(),
                num(r.worst_slack),
                num(r.bound),
                num(r.subspace_value),
                r.pass.to_string(),
            ])?;
        }
        c.flush()?;
        Ok(())
    })?;
    let boundary = boundary_terms(&d.setup.basis, &d.setup.grid, &w);
    let failures: Vec<String> = rows.iter().filter(|r| !r.4).map(|r| format!("{} {}", r.1, r.0)).collect();
    let summary = CheckSummary {
        inequality_failures: failures.clone(),
        certifications: &certs,
        boundary,
        equivalence_constant: c_eq,
    };
    out.json("check.json", &summary)?;
    let mut bad = failures;
    bad.extend(certs.iter().filter(|c| !c.pass).map(|c| c.name.clone()));
    if !boundary.pass {
        bad.push("boundary terms".into());
    }
    println!("check: {} inequality rows, {} certifications, {} failures", rows.len(), certs.len(), bad.len());
    Ok(if bad.is_empty() { Status::Pass } else { Status::Violation(format!("failed: {}", bad.join("; "))) })
}

/// `solve`: real evolution of the projected payoff with envelope checks.
pub fn solve(cfg: &RunConfig, out: &mut Artifacts<'_>) -> Result<Status> {
    let (t, rep) = match admissible(cfg, out)? {
        Ok(v) => v,
        Err(s) => return Ok(s),
    };
    let d = discretize(cfg, &t, &rep)?;
    let proj = project_payoff(&payoff(cfg), &d.setup.basis, &d.setup.grid, &d.setup.weight)?;
    let ev = evolve(&d.mats, &proj.coeffs, &cfg.solve_config(), None)?;
    out.csv("trajectory.csv", |w| Ok(ev.report.write_csv(w)?))?;
    out.csv("coefficients.csv", |w| Ok(ev.final_state.write_csv(w)?))?;
    out.json(
        "solve.json",
        &json!({
            "projection_residual": proj.residual,
            "payoff_norm": proj.norm,
            "rate": ev.report.rate,
            "max_excess": ev.report.max_excess,
            "empirical_rate": ev.report.empirical_rate,
            "violations": ev.report.violations,
        }),
    )?;
    println!(
        "solve: {} steps, max relative excess {:e}, {} violations",
        ev.report.steps.len() - 1,
        ev.report.max_excess,
        ev.report.violations.len()
    );
    Ok(if ev.report.ok() {
        Status::Pass
    } else {
        Status::Violation(format!("envelope violated at {} steps", ev.report.violations.len()))
    })
}

/// `price`: price surface and comparison with the closed form.
pub fn price(cfg: &RunConfig, out: &mut Artifacts<'_>) -> Result<Status> {
    let (t, rep) = match admissible(cfg, out)? {
        Ok(v) => v,
        Err(s) => return Ok(s),
    };
    let d = discretize(cfg, &t, &rep)?;
    let pc = &cfg.pricing;
    let m = &cfg.model;
    let p = payoff(cfg);
    let run = solve_pde(m, &p, &d.setup, &cfg.solve_config(), pc.method.into(), pc.v0)?;
    let sol = run.final_solution();
    let surface = price_surface(&sol, &p, m, &pc.x.nodes(), &pc.v.nodes())?;
    out.csv("surface.csv", |w| Ok(surface.write_csv(w)?))?;

    let x0 = (pc.s0 / m.strike).ln();
    let pde = price_surface(&sol, &p, m, &[x0], &[pc.v0])?.price[0][0];
    let cf = closed_form_price(m, pc.s0, pc.v0, pc.option)?;
    let abs = (pde - cf).abs();
    let rel = abs / cf.abs().max(f64::MIN_POSITIVE);
    out.csv("comparison.csv", |w| {
        let mut c = csv::Writer::from_writer(w);
        c.write_record(["s0", "v0", "t", "pde", "closed_form", "abs_error", "rel_error"])?;
        c.write_record([num(pc.s0), num(pc.v0), num(sol.t), num(pde), num(cf), num(abs), num(rel)])?;
        c.flush()?;
        Ok(())
    })?;
    let negative = surface.negative_nodes(1e-3 * m.strike).len();
    println!("price: pde {pde:.6}, closed form {cf:.6}, relative error {rel:.3e}, negative nodes {negative}");
    match pc.rel_tol {
        Some(tol) if !(rel <= tol) => Ok(Status::Violation(format!("relative error {rel:e} exceeds {tol:e}"))),
        _ => Ok(Status::Pass),
    }
}

struct Labeled {
    kind: &'static str,
    y: f64,
    omega: f64,
    phi: f64,
    ev: Evolution,
}

/// `shift`: constant-shift and path solves with envelope checks.
pub fn shift(cfg: &RunConfig, out: &mut Artifacts<'_>) -> Result<Status> {
    let sc = &cfg.shift;
    if sc.shifts.is_empty() && sc.paths.is_empty() {
        return Err(Error::InvalidParameter {
            name: "shift",
            reason: "configure at least one shift or path".into(),
        }
        .into());
    }
    let (t, rep) = match admissible(cfg, out)? {
        Ok(v) => v,
        Err(s) => return Ok(s),
    };
    let d = discretize(cfg, &t, &rep)?;
    let s = &d.setup;
    let c0 = project_payoff(&payoff(cfg), &s.basis, &s.grid, &s.weight)?.coeffs;
    let solve_cfg = cfg.solve_config();
    let shifted: Vec<Labeled> = sc
        .shifts
        .par_iter()
        .map(|p| -> heston_galerkin::Result<Labeled> {
            let v0 = shifted_initial(&s.basis, &s.grid, &s.weight, &c0, p)?;
            Ok(Labeled {
                kind: "shift",
                y: p.y,
                omega: p.omega,
                phi: 0.0,
                ev: evolve_shifted(&d.mats, p, &v0, &solve_cfg)?,
            })
        })
        .collect::<heston_galerkin::Result<_>>()?;
    let paths: Vec<Labeled> = sc
        .paths
        .par_iter()
        .map(|p| -> heston_galerkin::Result<Labeled> {
            Ok(Labeled {
                kind: "path",
                y: p.y0,
                omega: p.omega0,
                phi: p.phi,
                ev: evolve_along_path(&d.mats, p, &c0, &solve_cfg, sc.l3_form)?,
            })
        })
        .collect::<heston_galerkin::Result<_>>()?;
    let runs: Vec<&Labeled> = shifted.iter().chain(&paths).collect();
    out.csv("envelope.csv", |w: &mut dyn Write| {
        let mut c = csv::Writer::from_writer(w);
        c.write_record(["run", "kind", "y", "omega", "phi", "step", "t", "h_norm", "envelope", "slack", "violation"])?;
        for (i, r) in runs.iter().enumerate() {
            for st in &r.ev.report.steps {
                c.write_record([
                    i.to_string(),
                    r.kind.to_string(),
                    num(r.y),
                    num(r.omega),
                    num(r.phi),
                    st.step.to_string(),
                    num(st.t),
                    num(st.h_norm),
                    num(st.envelope),
                    num(st.slack),
                    st.violation.to_string(),
                ])?;
            }
        }
        c.flush()?;
        Ok(())
    })?;
    let smallness: Vec<SmallnessReport> = sc.paths.iter().map(|p| smallness_condition(&d.mats, p)).collect::<heston_galerkin::Result<_>>()?;
    if !smallness.is_empty() {
        out.json("smallness.json", &smallness)?;
    }
    let bad: Vec<usize> = runs.iter().enumerate().filter(|(_, r)| !r.ev.report.ok()).map(|(i, _)| i).collect();
    let worst = runs.iter().map(|r| r.ev.report.max_excess).fold(f64::NEG_INFINITY, f64::max);
    println!("shift: {} runs, max relative excess {worst:e}, {} violating", runs.len(), bad.len());
    Ok(if bad.is_empty() { Status::Pass } else { Status::Violation(format!("envelope violated by runs {bad:?}")) })
}

/// `complete`: sign structure of `du/dxi` at the configured times.
pub fn complete(cfg: &RunConfig, out: &mut Artifacts<'_>) -> Result<Status> {
    let (t, rep) = match admissible(cfg, out)? {
        Ok(v) => v,
        Err(s) => return Ok(s),
    };
    let pc = &cfg.pricing;
    let mut solve_cfg = cfg.solve_config();
    solve_cfg.keep_states = true;
    if let Some(bad) = pc.completeness_times.iter().find(|&&tt| !(tt > 0.0 && tt <= solve_cfg.t_end)) {
        return Err(Error::InvalidParameter {
            name: "completeness_times",
            reason: format!("time {bad} outside (0, {}]", solve_cfg.t_end),
        }
        .into());
    }
    let d = discretize(cfg, &t, &rep)?;
    let run = solve_pde(&cfg.model, &payoff(cfg), &d.setup, &solve_cfg, pc.method.into(), pc.v0)?;
    let mut sols = Vec::new();
    for &tt in &pc.completeness_times {
        match run.solution_at(tt) {
            Some(s) => sols.push(s),
            None => bail!("no stored state near t = {tt}"),
        }
    }
    let report = completeness_report(&sols, pc.zero_set_tol)?;
    out.json("completeness.json", &report)?;
    let mut fields = Vec::new();
    for s in &sols {
        fields.push((s.t, interior_derivative(s)?));
    }
    out.csv("completeness.csv", |w| {
        let mut c = csv::Writer::from_writer(w);
        c.write_record(["t", "x", "xi", "du_dxi"])?;
        for (tt, (x, xi, dm)) in &fields {
            for (i, xv) in x.iter().enumerate() {
                for (k, kv) in xi.iter().enumerate() {
                    c.write_record([num(*tt), num(*xv), num(*kv), num(dm[(i, k)])])?;
                }
            }
        }
        c.flush()?;
        Ok(())
    })?;
    for e in &report.entries {
        println!(
            "complete: t = {}, min du/dxi {:e}, nonpositive {:.1}%, zero-set {:.1}%",
            e.t,
            e.min_du_dxi,
            100.0 * e.nonpositive_fraction,
            100.0 * e.zero_set_fraction
        );
    }
    Ok(match (pc.option, report.pass) {
        (OptionKind::Call, false) => Status::Violation("call price derivative in the variance is not sign-definite".into()),
        _ => Status::Pass,
    })
}

/// `mc`: Monte Carlo estimate with the closed form alongside.
pub fn mc(cfg: &RunConfig, out: &mut Artifacts<'_>) -> Result<Status> {
    let pc = &cfg.pricing;
    let m = &cfg.model;
    let est = mc_price(m, pc.s0, pc.v0, &payoff(cfg), &cfg.oracle.mc)?;
    let cf = closed_form_price(m, pc.s0, pc.v0, pc.option)?;
    let z = (est.mean - cf) / est.std_error;
    out.json("mc.json", &json!({ "estimate": est, "closed_form": cf, "z_score": z }))?;
    out.csv("mc.csv", |w| {
        let mut c = csv::Writer::from_writer(w);
        c.write_record(["s0", "v0", "paths", "mean", "std_error", "closed_form", "z_score"])?;
        c.write_record([num(pc.s0), num(pc.v0), est.paths.to_string(), num(est.mean), num(est.std_error), num(cf), num(z)])?;
        c.flush()?;
        Ok(())
    })?;
    println!("mc: {:.6} +- {:.6} over {} paths, closed form {cf:.6}", est.mean, est.std_error, est.paths);
    Ok(Status::Pass)
}
