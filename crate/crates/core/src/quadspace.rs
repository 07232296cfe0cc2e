//! Weighted quadrature on the half-plane `R x (0, inf)` for the measure
//! `xi^(beta-1) exp(-gamma |x| - mu xi) dx dxi`, the `H` and `V` inner
//! products, and numerical checkers for the weighted Hardy, Sobolev and trace
//! inequalities.
//!
//! The grid is a tensor product of composite Gauss-Legendre rules. The `x`
//! axis is split at the origin so that `|x|` and `sign x` are smooth on every
//! panel, and the `xi` axis is refined geometrically toward `xi = 0`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_ur;

use crate::error::{Error, Result};
use crate::params::WeightParams;

/// Gauss-Legendre nodes and weights on `[-1, 1]`, computed by Newton iteration
/// on the Legendre three-term recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p0 = 1.0;
                p1 = z;
            }
            dp = nf * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Construction parameters of a [`QuadratureGrid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    /// Gauss-Legendre points per panel.
    pub points_per_panel: usize,
    /// Panels per half-line inside the `x` core zone.
    pub x_panels: usize,
    /// Geometric panels grading the first `xi` core panel toward zero.
    pub xi_panels: usize,
    /// Ratio between consecutive graded `xi` panel edges.
    pub xi_grading: f64,
    /// Relative mass of the weight allowed beyond the truncation bounds.
    pub tail_mass: f64,
    /// Width of the uniformly resolved `x` zone; `None` uses the whole half-line.
    pub x_core: Option<f64>,
    /// Width of the uniformly resolved `xi` zone; `None` grades the whole range.
    pub xi_core: Option<f64>,
    /// Number of uniform panels inside the `xi` core zone.
    pub xi_core_panels: usize,
    /// Explicit truncation bound in `x`; the tail-mass bound is used when absent.
    pub x_max: Option<f64>,
    /// Explicit truncation bound in `xi`; the tail-mass bound is used when absent.
    pub xi_max: Option<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            points_per_panel: 24,
            x_panels: 8,
            xi_panels: 12,
            xi_grading: 0.125,
            tail_mass: 1e-12,
            x_core: None,
            xi_core: None,
            xi_core_panels: 1,
            x_max: None,
            xi_max: None,
        }
    }
}

impl GridSpec {
    /// Every panel count multiplied by two, keeping the zone layout.
    pub fn refined(&self) -> Self {
        Self {
            x_panels: 2 * self.x_panels,
            xi_panels: 2 * self.xi_panels,
            xi_core_panels: 2 * self.xi_core_panels,
            ..self.clone()
        }
    }
}

/// Tensor-product quadrature grid on the truncated half-plane.
///
/// Weights are plain Lebesgue weights; the measure `w(x, xi)` is applied by
/// [`QuadratureGrid::x_weights`] and [`QuadratureGrid::xi_weights`].
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    /// Nodes in `x`, ascending, none at zero.
    pub x: Vec<f64>,
    /// Lebesgue weights for `x`.
    pub wx: Vec<f64>,
    /// Nodes in `xi`, ascending, all positive.
    pub xi: Vec<f64>,
    /// Lebesgue weights for `xi`.
    pub wxi: Vec<f64>,
    /// Truncation bound in `x`.
    pub x_max: f64,
    /// Truncation bound in `xi`.
    pub xi_max: f64,
    /// Panel edges on `[0, x_max]`.
    pub x_edges: Vec<f64>,
    /// Panel edges on `[0, xi_max]`.
    pub xi_edges: Vec<f64>,
    /// Points per panel.
    pub points_per_panel: usize,
}

fn xi_tail_bound(beta: f64, mu: f64, tail: f64) -> f64 {
    // Tail of xi^beta e^{-mu xi}, which dominates the tail of the H weight.
    let a = beta + 1.0;
    let mut hi = (a + 50.0) / mu;
    while gamma_ur(a, mu * hi) > tail {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if gamma_ur(a, mu * mid) > tail {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

fn push_panels(edges: &[f64], gl: &(Vec<f64>, Vec<f64>), nodes: &mut Vec<f64>, weights: &mut Vec<f64>) {
    for win in edges.windows(2) {
        let (l, r) = (win[0], win[1]);
        let half = 0.5 * (r - l);
        let mid = 0.5 * (r + l);
        for (g, w) in gl.0.iter().zip(&gl.1) {
            nodes.push(mid + half * g);
            weights.push(half * w);
        }
    }
}

fn tail_edges(start: f64, first_width: f64, end: f64, edges: &mut Vec<f64>) {
    let mut pos = start;
    let mut width = first_width;
    while pos < end * (1.0 - 1e-14) {
        width *= 2.0;
        pos = (pos + width).min(end);
        edges.push(pos);
    }
}

impl QuadratureGrid {
    /// Builds a grid whose truncation bounds keep the tail mass of `w`
    /// below `spec.tail_mass`.
    pub fn new(spec: &GridSpec, w: &WeightParams) -> Result<Self> {
        if spec.points_per_panel == 0 || spec.x_panels == 0 || spec.xi_panels == 0 || spec.xi_core_panels == 0 {
            return Err(Error::InvalidParameter {
                name: "grid",
                reason: "panel and point counts must be positive".into(),
            });
        }
        if !(spec.xi_grading > 0.0 && spec.xi_grading < 1.0) {
            return Err(Error::InvalidParameter {
                name: "xi_grading",
                reason: format!("must lie in (0, 1), got {}", spec.xi_grading),
            });
        }
        if !(spec.tail_mass > 0.0 && spec.tail_mass < 1.0) {
            return Err(Error::InvalidParameter {
                name: "tail_mass",
                reason: format!("must lie in (0, 1), got {}", spec.tail_mass),
            });
        }
        let gl = gauss_legendre(spec.points_per_panel);

        let x_tail = -spec.tail_mass.ln() / w.gamma;
        let mut x_max = spec.x_max.unwrap_or(x_tail);
        if let Some(c) = spec.x_core {
            x_max = x_max.max(c);
        }
        let mut x_edges = vec![0.0];
        match spec.x_core {
            Some(core) if core < x_max => {
                let h = core / spec.x_panels as f64;
                x_edges.extend((1..=spec.x_panels).map(|k| k as f64 * h));
                tail_edges(core, h, x_max, &mut x_edges);
            }
            _ => {
                let h = x_max / spec.x_panels as f64;
                x_edges.extend((1..=spec.x_panels).map(|k| k as f64 * h));
            }
        }
        let mut xr = Vec::new();
        let mut wr = Vec::new();
        push_panels(&x_edges, &gl, &mut xr, &mut wr);
        let mut x: Vec<f64> = xr.iter().rev().map(|v| -v).collect();
        let mut wx: Vec<f64> = wr.iter().rev().copied().collect();
        x.extend_from_slice(&xr);
        wx.extend_from_slice(&wr);

        let xi_tail = xi_tail_bound(w.beta, w.mu, spec.tail_mass);
        let mut xi_max = spec.xi_max.unwrap_or(xi_tail);
        if let Some(c) = spec.xi_core {
            xi_max = xi_max.max(c);
        }
        let (core, ncore) = match spec.xi_core {
            Some(c) if c < xi_max => (c, spec.xi_core_panels),
            _ => (xi_max, spec.xi_core_panels),
        };
        let h = core / ncore as f64;
        let mut xi_edges = vec![0.0];
        for k in (1..spec.xi_panels).rev() {
            xi_edges.push(h * spec.xi_grading.powi(k as i32));
        }
        xi_edges.extend((1..=ncore).map(|k| k as f64 * h));
        if core < xi_max {
            tail_edges(core, h, xi_max, &mut xi_edges);
        }
        let mut xi = Vec::new();
        let mut wxi = Vec::new();
        push_panels(&xi_edges, &gl, &mut xi, &mut wxi);

        Ok(Self {
            x,
            wx,
            xi,
            wxi,
            x_max,
            xi_max,
            x_edges,
            xi_edges,
            points_per_panel: spec.points_per_panel,
        })
    }

    /// `wx_i exp(-gamma |x_i|)`.
    pub fn x_weights(&self, gamma: f64) -> Vec<f64> {
        self.x
            .iter()
            .zip(&self.wx)
            .map(|(x, w)| w * (-gamma * x.abs()).exp())
            .collect()
    }

    /// `wxi_k xi_k^(beta-1) exp(-mu xi_k)`.
    pub fn xi_weights(&self, beta: f64, mu: f64) -> Vec<f64> {
        self.xi
            .iter()
            .zip(&self.wxi)
            .map(|(xi, w)| w * xi.powf(beta - 1.0) * (-mu * xi).exp())
            .collect()
    }

    /// Number of nodes in `x` and `xi`.
    pub fn shape(&self) -> (usize, usize) {
        (self.x.len(), self.xi.len())
    }

    /// `sum_{i,k} f(x_i, xi_k) w(x_i, xi_k)`.
    pub fn integrate(&self, w: &WeightParams, f: impl Fn(f64, f64) -> f64) -> f64 {
        let w1 = self.x_weights(w.gamma);
        let w2 = self.xi_weights(w.beta, w.mu);
        let mut total = 0.0;
        for (x, a) in self.x.iter().zip(&w1) {
            let mut row = 0.0;
            for (xi, b) in self.xi.iter().zip(&w2) {
                row += f(*x, *xi) * b;
            }
            total += row * a;
        }
        total
    }
}

/// Evaluates the weight `xi^(beta-1) exp(-gamma |x| - mu xi)`.
pub fn weight_eval(x: f64, xi: f64, w: &WeightParams) -> Result<f64> {
    if !(xi > 0.0) {
        return Err(Error::Domain(format!("weight requires xi > 0, got {xi}")));
    }
    Ok(xi.powf(w.beta - 1.0) * (-w.gamma * x.abs() - w.mu * xi).exp())
}

type Field<'a> = Box<dyn Fn(f64, f64) -> Complex64 + Send + Sync + 'a>;

/// A complex function on the half-plane with optional analytic partials.
pub struct WeightedFunction<'a> {
    value: Field<'a>,
    dx: Option<Field<'a>>,
    dxi: Option<Field<'a>>,
}

impl<'a> WeightedFunction<'a> {
    /// Wraps a function without partials.
    pub fn new(f: impl Fn(f64, f64) -> Complex64 + Send + Sync + 'a) -> Self {
        Self {
            value: Box::new(f),
            dx: None,
            dxi: None,
        }
    }

    /// Wraps a function together with its partials in `x` and `xi`.
    pub fn with_partials(
        f: impl Fn(f64, f64) -> Complex64 + Send + Sync + 'a,
        fx: impl Fn(f64, f64) -> Complex64 + Send + Sync + 'a,
        fxi: impl Fn(f64, f64) -> Complex64 + Send + Sync + 'a,
    ) -> Self {
        Self {
            value: Box::new(f),
            dx: Some(Box::new(fx)),
            dxi: Some(Box::new(fxi)),
        }
    }

    /// Wraps a real function of `x` and `xi` without partials.
    pub fn real(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'a) -> Self {
        Self::new(move |x, xi| Complex64::new(f(x, xi), 0.0))
    }

    /// Value at a point.
    pub fn eval(&self, x: f64, xi: f64) -> Complex64 {
        (self.value)(x, xi)
    }

    /// Partial in `x`, when available.
    pub fn eval_dx(&self, x: f64, xi: f64) -> Option<Complex64> {
        self.dx.as_ref().map(|f| f(x, xi))
    }

    /// Partial in `xi`, when available.
    pub fn eval_dxi(&self, x: f64, xi: f64) -> Option<Complex64> {
        self.dxi.as_ref().map(|f| f(x, xi))
    }

    /// Whether both partials are available.
    pub fn has_partials(&self) -> bool {
        self.dx.is_some() && self.dxi.is_some()
    }

    /// Values on every grid node, row-major in `x`.
    pub fn sample(&self, grid: &QuadratureGrid) -> Vec<Complex64> {
        sample_field(&self.value, grid)
    }
}

fn sample_field(f: &Field<'_>, grid: &QuadratureGrid) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(grid.x.len() * grid.xi.len());
    for &x in &grid.x {
        for &xi in &grid.xi {
            out.push(f(x, xi));
        }
    }
    out
}

fn weighted_sum(grid: &QuadratureGrid, w: &WeightParams, xi_power: f64, mut f: impl FnMut(usize) -> Complex64) -> Complex64 {
    let w1 = grid.x_weights(w.gamma);
    let w2: Vec<f64> = grid
        .xi_weights(w.beta, w.mu)
        .iter()
        .zip(&grid.xi)
        .map(|(b, xi)| b * xi.powf(xi_power))
        .collect();
    let nxi = grid.xi.len();
    let mut total = Complex64::new(0.0, 0.0);
    for (i, a) in w1.iter().enumerate() {
        let mut row = Complex64::new(0.0, 0.0);
        for (k, b) in w2.iter().enumerate() {
            row += f(i * nxi + k) * *b;
        }
        total += row * *a;
    }
    total
}

fn sq_integral(grid: &QuadratureGrid, w: &WeightParams, xi_power: f64, vals: &[Complex64]) -> f64 {
    weighted_sum(grid, w, xi_power, |j| Complex64::new(vals[j].norm_sqr(), 0.0)).re
}

/// `(u, v)_H = int u conj(v) w`.
pub fn inner_h(u: &WeightedFunction<'_>, v: &WeightedFunction<'_>, grid: &QuadratureGrid, w: &WeightParams) -> Complex64 {
    let a = u.sample(grid);
    let b = v.sample(grid);
    weighted_sum(grid, w, 0.0, |j| a[j] * b[j].conj())
}

/// `(u, v)_V = int (u_x conj(v_x) + u_xi conj(v_xi)) xi w + (u, v)_H`.
pub fn inner_v(u: &WeightedFunction<'_>, v: &WeightedFunction<'_>, grid: &QuadratureGrid, w: &WeightParams) -> Result<Complex64> {
    let missing = || Error::Domain("inner_V requires analytic partials of both arguments".into());
    let (ux, uxi) = (u.dx.as_ref().ok_or_else(missing)?, u.dxi.as_ref().ok_or_else(missing)?);
    let (vx, vxi) = (v.dx.as_ref().ok_or_else(missing)?, v.dxi.as_ref().ok_or_else(missing)?);
    let (ax, axi, bx, bxi) = (sample_field(ux, grid), sample_field(uxi, grid), sample_field(vx, grid), sample_field(vxi, grid));
    let grad = weighted_sum(grid, w, 1.0, |j| ax[j] * bx[j].conj() + axi[j] * bxi[j].conj());
    Ok(grad + inner_h(u, v, grid, w))
}

/// `||u||_H^2`.
pub fn norm_h_sq(u: &WeightedFunction<'_>, grid: &QuadratureGrid, w: &WeightParams) -> f64 {
    sq_integral(grid, w, 0.0, &u.sample(grid))
}

/// `||u||_V^2`.
pub fn norm_v_sq(u: &WeightedFunction<'_>, grid: &QuadratureGrid, w: &WeightParams) -> Result<f64> {
    Ok(inner_v(u, u, grid, w)?.re)
}

/// Outcome of a numerical inequality or trace check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    /// Which inequality was checked.
    pub name: String,
    /// Left-hand side.
    pub lhs: f64,
    /// Right-hand side.
    pub rhs: f64,
    /// `lhs <= rhs (1 + tol_rel)`.
    pub pass: bool,
    /// Named constants used to form the right-hand side.
    pub constants: Vec<(String, f64)>,
    /// Extrapolated limit at `xi -> 0+`, for trace checks.
    pub l0: Option<f64>,
    /// Extrapolated limit at `xi -> inf`, for trace checks.
    pub l_infinity: Option<f64>,
    /// Extrapolated limit at `x -> +-inf`, for trace checks.
    pub l_x: Option<f64>,
}

/// Relative tolerance for pass/fail of the weighted inequalities.
pub const TOL_REL: f64 = 1e-8;
/// Trace limits pass below `TRACE_TOL * ||u||_H^2`.
pub const TRACE_TOL: f64 = 1e-8;

struct Sampled {
    u: Vec<Complex64>,
    uxi: Vec<Complex64>,
}

fn sample_with_dxi(u: &WeightedFunction<'_>, grid: &QuadratureGrid, what: &str) -> Result<Sampled> {
    let dxi = u
        .dxi
        .as_ref()
        .ok_or_else(|| Error::Domain(format!("{what} requires the analytic partial in xi")))?;
    Ok(Sampled {
        u: u.sample(grid),
        uxi: sample_field(dxi, grid),
    })
}

fn ineq_report(name: &str, lhs: f64, rhs: f64, constants: Vec<(String, f64)>) -> InequalityReport {
    InequalityReport {
        name: name.into(),
        lhs,
        rhs,
        pass: lhs <= rhs * (1.0 + TOL_REL),
        constants,
        l0: None,
        l_infinity: None,
        l_x: None,
    }
}

/// Weighted Hardy inequality for `beta > 1`:
///
/// ```text
/// int |u/xi|^2 xi^beta e  <=  8/(beta-1)^2 int |u_xi|^2 xi^beta e + 2 mu^2/(beta-1)^2 int |u|^2 xi^beta e
/// ```
///
/// with `e = exp(-gamma |x| - mu xi)`.
pub fn check_hardy(u: &WeightedFunction<'_>, grid: &QuadratureGrid, w: &WeightParams) -> Result<InequalityReport> {
    if !(w.beta > 1.0) {
        return Err(Error::Domain(format!("Hardy inequality requires beta > 1, got {}", w.beta)));
    }
    let s = sample_with_dxi(u, grid, "Hardy check")?;
    let b1 = (w.beta - 1.0).powi(2);
    let (ca, cb) = (8.0 / b1, 2.0 * w.mu * w.mu / b1);
    let lhs = sq_integral(grid, w, -1.0, &s.u);
    let rhs = ca * sq_integral(grid, w, 1.0, &s.uxi) + cb * sq_integral(grid, w, 1.0, &s.u);
    Ok(ineq_report("hardy", lhs, rhs, vec![("c_grad".into(), ca), ("c_mass".into(), cb)]))
}

/// Weighted Sobolev-type inequality:
///
/// ```text
/// int |u|^2 xi^beta e  <=  (2/mu)^2 int |u_xi|^2 xi^beta e + (2 beta / mu) int |u|^2 xi^(beta-1) e
/// ```
pub fn check_sobolev(u: &WeightedFunction<'_>, grid: &QuadratureGrid, w: &WeightParams) -> Result<InequalityReport> {
    let s = sample_with_dxi(u, grid, "Sobolev check")?;
    let (ca, cb) = ((2.0 / w.mu).powi(2), 2.0 * w.beta / w.mu);
    let lhs = sq_integral(grid, w, 1.0, &s.u);
    let rhs = ca * sq_integral(grid, w, 1.0, &s.uxi) + cb * sq_integral(grid, w, 0.0, &s.u);
    Ok(ineq_report("sobolev", lhs, rhs, vec![("c_grad".into(), ca), ("c_mass".into(), cb)]))
}

/// Value at zero of the quadratic through three points (Neville scheme).
fn extrapolate_to_zero(pts: &[(f64, f64); 3]) -> f64 {
    let mut p = [pts[0].1, pts[1].1, pts[2].1];
    let t = [pts[0].0, pts[1].0, pts[2].0];
    for level in 1..3 {
        for i in 0..3 - level {
            let (ti, tj) = (t[i], t[i + level]);
            p[i] = (tj * p[i] - ti * p[i + 1]) / (tj - ti);
        }
    }
    p[0]
}

fn x_slice_integral(u: &WeightedFunction<'_>, grid: &QuadratureGrid, gamma: f64, xi: f64) -> f64 {
    grid.x
        .iter()
        .zip(grid.wx.iter())
        .map(|(x, wx)| u.eval(*x, xi).norm_sqr() * (-gamma * x.abs()).exp() * wx)
        .sum()
}

fn xi_slice_integral(u: &WeightedFunction<'_>, grid: &QuadratureGrid, w: &WeightParams, x: f64) -> f64 {
    grid.xi
        .iter()
        .zip(grid.wxi.iter())
        .map(|(xi, wxi)| u.eval(x, *xi).norm_sqr() * xi.powf(w.beta - 1.0) * (-w.mu * xi).exp() * wxi)
        .sum()
}

/// Trace limits of `u` at the three edges of the half-plane.
///
/// * `L0 = lim_{xi -> 0+} xi^beta int |u|^2 e^{-gamma |x|} dx`
/// * `L_infinity = lim_{xi -> inf} xi^beta e^{-mu xi} int |u|^2 e^{-gamma |x|} dx`
/// * `L_x = lim_{|x| -> inf} e^{-gamma |x|} int |u|^2 xi^(beta-1) e^{-mu xi} dxi`
///
/// The limit at zero is extrapolated from the three innermost panel edges.
/// The limits at infinity are extrapolated from the truncation bound and its
/// double and quadruple. The check passes when all limits are below `1e-8 ||u||_H^2`.
pub fn check_traces(u: &WeightedFunction<'_>, grid: &QuadratureGrid, w: &WeightParams) -> InequalityReport {
    let e = &grid.xi_edges;
    let small = [e[1], e[2], e[3]];
    let pts0 = small.map(|xi| (xi, xi.powf(w.beta) * x_slice_integral(u, grid, w.gamma, xi)));
    let l0 = extrapolate_to_zero(&pts0);

    let top = e[e.len() - 1];
    let large = [top, 2.0 * top, 4.0 * top];
    let pts_inf = large.map(|xi| (1.0 / xi, xi.powf(w.beta) * (-w.mu * xi).exp() * x_slice_integral(u, grid, w.gamma, xi)));
    let l_inf = extrapolate_to_zero(&pts_inf);

    let edge = grid.x_max;
    let far = [edge, 2.0 * edge, 4.0 * edge];
    let mut l_x: f64 = 0.0;
    for sgn in [-1.0, 1.0] {
        let pts = far.map(|x| (1.0 / x, (-w.gamma * x).exp() * xi_slice_integral(u, grid, w, sgn * x)));
        l_x = l_x.max(extrapolate_to_zero(&pts).abs());
    }

    let tol = TRACE_TOL * norm_h_sq(u, grid, w);
    let lhs = l0.abs().max(l_inf.abs()).max(l_x);
    InequalityReport {
        name: "traces".into(),
        lhs,
        rhs: tol,
        pass: l0.abs() < tol && l_inf.abs() < tol && l_x < tol,
        constants: vec![("tol_abs".into(), tol)],
        l0: Some(l0),
        l_infinity: Some(l_inf),
        l_x: Some(l_x),
    }
}

/// `||u||_V^2 + int |u|^2 (xi + 1/xi) w`, the equivalent norm on `V`.
pub fn norm_v_sharp_sq(u: &WeightedFunction<'_>, grid: &QuadratureGrid, w: &WeightParams) -> Result<f64> {
    let vals = u.sample(grid);
    Ok(norm_v_sq(u, grid, w)? + sq_integral(grid, w, 1.0, &vals) + sq_integral(grid, w, -1.0, &vals))
}

/// Constant `C_eq` of the norm equivalence `||u||_V^2 <= ||u||_#^2 <= C_eq ||u||_V^2`,
/// built from the Sobolev and Hardy constants.
pub fn equivalence_constant(w: &WeightParams) -> f64 {
    let b1 = (w.beta - 1.0).powi(2);
    1.0 + (2.0 / w.mu).powi(2).max(8.0 / b1) + (2.0 * w.beta / w.mu).max(2.0 * w.mu * w.mu / b1)
}

type Scalar = fn(f64) -> (f64, f64);

fn x_factors() -> Vec<(&'static str, Scalar)> {
    vec![
        ("exp(-|x|)", |x| ((-x.abs()).exp(), -x.signum() * (-x.abs()).exp())),
        ("exp(-x^2)", |x| ((-x * x).exp(), -2.0 * x * (-x * x).exp())),
        ("x exp(-x^2)", |x| (x * (-x * x).exp(), (1.0 - 2.0 * x * x) * (-x * x).exp())),
        ("1/(1+x^2)", |x| (1.0 / (1.0 + x * x), -2.0 * x / (1.0 + x * x).powi(2))),
        ("cos(x) exp(-x^2/2)", |x| {
            let g = (-0.5 * x * x).exp();
            (x.cos() * g, (-x.sin() - x * x.cos()) * g)
        }),
    ]
}

fn xi_factors() -> Vec<(&'static str, Scalar)> {
    vec![
        ("exp(-xi)", |s| ((-s).exp(), -(-s).exp())),
        ("xi exp(-xi)", |s| (s * (-s).exp(), (1.0 - s) * (-s).exp())),
        ("xi^2 exp(-2xi)", |s| (s * s * (-2.0 * s).exp(), (2.0 * s - 2.0 * s * s) * (-2.0 * s).exp())),
        ("1/(1+xi)^2", |s| (1.0 / (1.0 + s).powi(2), -2.0 / (1.0 + s).powi(3))),
    ]
}

/// Twenty separable test functions with analytic partials and finite `V` norm.
pub fn standard_family() -> Vec<(String, WeightedFunction<'static>)> {
    let mut out = Vec::new();
    for (nx, fx) in x_factors() {
        for (ns, fs) in xi_factors() {
            let u = WeightedFunction::with_partials(
                move |x, s| Complex64::new(fx(x).0 * fs(s).0, 0.0),
                move |x, s| Complex64::new(fx(x).1 * fs(s).0, 0.0),
                move |x, s| Complex64::new(fx(x).0 * fs(s).1, 0.0),
            );
            out.push((format!("{nx} * {ns}"), u));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn ref_weight() -> WeightParams {
        WeightParams::new(2.0, 2.0, 2.5).unwrap()
    }

    fn grid(w: &WeightParams) -> QuadratureGrid {
        QuadratureGrid::new(&GridSpec::default(), w).unwrap()
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(24);
        assert_relative_eq!(w.iter().sum::<f64>(), 2.0, max_relative = 1e-14);
        let p: f64 = x.iter().zip(&w).map(|(x, w)| x.powi(46) * w).sum();
        assert_relative_eq!(p, 2.0 / 47.0, max_relative = 1e-12);
        let (x5, w5) = gauss_legendre(5);
        assert_eq!(x5[2], 0.0);
        assert_relative_eq!(w5[2], 128.0 / 225.0, max_relative = 1e-14);
        let (x1, w1) = gauss_legendre(1);
        assert_eq!((x1[0], w1[0]), (0.0, 2.0));
    }

    #[test]
    fn grid_invariants() {
        let w = ref_weight();
        let g = grid(&w);
        assert!(g.wx.iter().all(|&v| v > 0.0));
        assert!(g.wxi.iter().all(|&v| v > 0.0));
        assert!(g.x.iter().all(|&v| v != 0.0));
        assert!(g.xi.iter().all(|&v| v > 0.0));
        assert!(g.x.windows(2).all(|p| p[0] < p[1]));
        assert_eq!(g.xi_edges.len(), 13);
        assert_eq!(g.x_edges.len(), 9);
        assert!((-w.gamma * g.x_max).exp() <= 1e-12 * (1.0 + 1e-9));
        assert!(gamma_ur(w.beta, w.mu * g.xi_max) < 1e-12);
    }

    #[test]
    fn weight_examples() {
        let w = ref_weight();
        assert_relative_eq!(weight_eval(0.0, 1.0, &w).unwrap(), (-2.5f64).exp(), max_relative = 1e-15);
        assert!((weight_eval(0.0, 1.0, &w).unwrap() - 0.082085).abs() < 1e-6);
        assert_eq!(weight_eval(1.3, 0.7, &w).unwrap(), weight_eval(-1.3, 0.7, &w).unwrap());
        let r = weight_eval(0.0, 1e-8, &w).unwrap() / 1e-8;
        assert_relative_eq!(r, 1.0, max_relative = 1e-6);
        assert!(matches!(weight_eval(0.0, 0.0, &w), Err(Error::Domain(_))));
        assert!(weight_eval(0.0, -1.0, &w).is_err());
    }

    #[test]
    fn inner_h_of_one() {
        let w = ref_weight();
        let g = grid(&w);
        let one = WeightedFunction::with_partials(|_, _| 1.0.into(), |_, _| 0.0.into(), |_, _| 0.0.into());
        assert_relative_eq!(inner_h(&one, &one, &g, &w).re, 0.16, max_relative = 1e-11);
        assert_eq!(inner_v(&one, &one, &g, &w).unwrap().re, inner_h(&one, &one, &g, &w).re);
    }

    #[test]
    fn inner_h_converges_under_refinement() {
        let w = WeightParams::new(1.7, 0.5, 6.4).unwrap();
        let one = WeightedFunction::real(|_, _| 1.0);
        let a = inner_h(&one, &one, &QuadratureGrid::new(&GridSpec::default(), &w).unwrap(), &w).re;
        let b = inner_h(&one, &one, &QuadratureGrid::new(&GridSpec::default().refined(), &w).unwrap(), &w).re;
        assert!(((a - b) / b).abs() < 1e-10, "{a} vs {b}");
        let exact = 2.0 / 0.5 * statrs::function::gamma::gamma(1.7) / 6.4f64.powf(1.7);
        assert_relative_eq!(b, exact, max_relative = 1e-10);
    }

    #[test]
    fn inner_products_conjugate_symmetric() {
        let w = ref_weight();
        let g = grid(&w);
        let u = WeightedFunction::with_partials(
            |x, xi| Complex64::new(x.cos(), xi) * (-x * x - xi).exp(),
            |x, xi| Complex64::new(-x.sin(), 0.0) * (-x * x - xi).exp() - 2.0 * x * Complex64::new(x.cos(), xi) * (-x * x - xi).exp(),
            |x, xi| Complex64::new(0.0, 1.0) * (-x * x - xi).exp() - Complex64::new(x.cos(), xi) * (-x * x - xi).exp(),
        );
        let v = WeightedFunction::with_partials(
            |x, xi| Complex64::new(1.0 + x, -xi * xi) * (-x.abs() - 2.0 * xi).exp(),
            |x, xi| Complex64::new(1.0, 0.0) * (-x.abs() - 2.0 * xi).exp() - x.signum() * Complex64::new(1.0 + x, -xi * xi) * (-x.abs() - 2.0 * xi).exp(),
            |x, xi| Complex64::new(0.0, -2.0 * xi) * (-x.abs() - 2.0 * xi).exp() - 2.0 * Complex64::new(1.0 + x, -xi * xi) * (-x.abs() - 2.0 * xi).exp(),
        );
        assert_eq!(inner_h(&u, &v, &g, &w), inner_h(&v, &u, &g, &w).conj());
        assert_eq!(inner_v(&u, &v, &g, &w).unwrap(), inner_v(&v, &u, &g, &w).unwrap().conj());
        assert!(norm_h_sq(&u, &g, &w) > 0.0);
        let zero = WeightedFunction::real(|_, _| 0.0);
        assert_eq!(norm_h_sq(&zero, &g, &w), 0.0);
        assert!(inner_v(&zero, &WeightedFunction::real(|_, _| 1.0), &g, &w).is_err());
    }

    #[test]
    fn hardy_refused_for_small_beta() {
        let w = WeightParams::new(1.0, 2.0, 2.5).unwrap();
        let g = grid(&w);
        let u = WeightedFunction::with_partials(|_, _| 1.0.into(), |_, _| 0.0.into(), |_, _| 0.0.into());
        assert!(check_hardy(&u, &g, &w).is_err());
    }

    #[test]
    fn extrapolation_recovers_quadratic() {
        let f = |t: f64| 3.0 - 2.0 * t + 0.5 * t * t;
        let pts = [(0.1, f(0.1)), (0.2, f(0.2)), (0.4, f(0.4))];
        assert_relative_eq!(extrapolate_to_zero(&pts), 3.0, max_relative = 1e-13);
    }

    #[test]
    fn equivalence_constant_reference() {
        let w = ref_weight();
        assert_relative_eq!(equivalence_constant(&w), 1.0 + 8.0 + 12.5, max_relative = 1e-14);
    }
}
