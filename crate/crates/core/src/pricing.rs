//! Payoffs, PDE pricing pipelines, price surfaces in the original variables,
//! and the market-completeness diagnostic `det G = du/dxi`.
//!
//! Two pipelines are available. The direct one projects the payoff and
//! evolves it. The residual one splits `u = g + w` where `g` is the
//! Black-Scholes price with a fixed reference variance `s2`. Since `g` does
//! not depend on `xi`, the remainder solves
//!
//! ```text
//! w_t + A w = ((sigma xi - s2) / 2) (g_xx - g_x),   w(0) = 0,
//! ```
//!
//! and `g_xx - g_x = K N(x; (q_r + s2/2) t, s2 t)` is a Gaussian density in
//! `x`, so the load vector is a Kronecker product of two small vectors.

use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::basis::{project, CoefficientVector, Projection, TensorBasis};
use crate::error::{invalid, Error, Result};
use crate::evolution::{evolve, Evolution, SolveConfig};
use crate::operator::{assemble, OperatorMatrices};
use crate::oracle::{black_scholes_forward, OptionKind};
use crate::params::{transform, ModelParams, TransformedParams, WeightParams};
use crate::quadspace::{gauss_legendre, QuadratureGrid, WeightedFunction};

/// Payoff `h(x)` in the log-moneyness `x = ln(S/K)`.
#[derive(Clone)]
pub enum Payoff {
    /// `K (e^x - 1)^+`.
    Call {
        /// Strike.
        strike: f64,
    },
    /// `K (1 - e^x)^+`.
    Put {
        /// Strike.
        strike: f64,
    },
    /// Any function of `x`, admitted after an `H`-membership check.
    Custom {
        /// Strike used for scaling diagnostics.
        strike: f64,
        /// Payoff as a function of `x`.
        f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    },
}

impl std::fmt::Debug for Payoff {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Payoff::Call { strike } => write!(f, "Call({strike})"),
            Payoff::Put { strike } => write!(f, "Put({strike})"),
            Payoff::Custom { strike, .. } => write!(f, "Custom({strike})"),
        }
    }
}

impl Payoff {
    /// Vanilla payoff of the given kind.
    pub fn vanilla(kind: OptionKind, strike: f64) -> Self {
        match kind {
            OptionKind::Call => Payoff::Call { strike },
            OptionKind::Put => Payoff::Put { strike },
        }
    }

    /// Strike `K`.
    pub fn strike(&self) -> f64 {
        match self {
            Payoff::Call { strike } | Payoff::Put { strike } | Payoff::Custom { strike, .. } => *strike,
        }
    }

    /// Kind of a vanilla payoff.
    pub fn kind(&self) -> Option<OptionKind> {
        match self {
            Payoff::Call { .. } => Some(OptionKind::Call),
            Payoff::Put { .. } => Some(OptionKind::Put),
            Payoff::Custom { .. } => None,
        }
    }

    /// `h(x)`.
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Payoff::Call { strike } => strike * (x.exp() - 1.0).max(0.0),
            Payoff::Put { strike } => strike * (1.0 - x.exp()).max(0.0),
            Payoff::Custom { f, .. } => f(x),
        }
    }

    /// Refuses payoffs outside `H`: calls need `gamma > 2`, custom payoffs
    /// must have a finite norm that is stable under extension of the grid.
    pub fn check_membership(&self, grid: &QuadratureGrid, w: &WeightParams) -> Result<f64> {
        if let Payoff::Call { .. } = self {
            if !(w.gamma > 2.0) {
                return Err(invalid("gamma", format!("call payoff lies in H only for gamma > 2, got {}", w.gamma)));
            }
        }
        let w1 = grid.x_weights(w.gamma);
        let mass: f64 = grid.xi_weights(w.beta, w.mu).iter().sum();
        let norm: f64 = grid.x.iter().zip(&w1).map(|(x, a)| self.eval(*x).powi(2) * a).sum::<f64>() * mass;
        if !norm.is_finite() {
            return Err(Error::Domain("payoff has no finite H norm on the grid".into()));
        }
        if let Payoff::Custom { .. } = self {
            let (nodes, weights) = gauss_legendre(24);
            let x0 = grid.x_max;
            let mut tail = 0.0;
            for k in 0..16 {
                let (l, r) = (x0 * (1.0 + k as f64 / 4.0), x0 * (1.0 + (k + 1) as f64 / 4.0));
                let (h, m) = (0.5 * (r - l), 0.5 * (r + l));
                for (g, wt) in nodes.iter().zip(&weights) {
                    for s in [-1.0, 1.0] {
                        let x = s * (m + h * g);
                        tail += self.eval(x).powi(2) * (-w.gamma * x.abs()).exp() * h * wt;
                    }
                }
            }
            let tail = tail * mass;
            if !tail.is_finite() || tail > 1e-6 * norm.max(f64::MIN_POSITIVE) {
                return Err(Error::Domain(format!(
                    "payoff is not in H: mass {tail:e} beyond the truncation versus norm {norm:e}"
                )));
            }
        }
        Ok(norm.sqrt())
    }
}

/// Projects a payoff after checking `H`-membership.
pub fn project_payoff(payoff: &Payoff, basis: &TensorBasis, grid: &QuadratureGrid, w: &WeightParams) -> Result<Projection> {
    payoff.check_membership(grid, w)?;
    let p = payoff.clone();
    let f = WeightedFunction::real(move |x, _| p.eval(x));
    project(&f, basis, grid, w)
}

/// Black-Scholes part of the residual decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceBs {
    /// Option kind.
    pub kind: OptionKind,
    /// Strike.
    pub strike: f64,
    /// Reference variance `s2`.
    pub variance: f64,
    /// `q - r`.
    pub q_r: f64,
}

impl ReferenceBs {
    /// Undiscounted Black-Scholes value `g(x, t)`.
    pub fn value(&self, x: f64, t: f64) -> f64 {
        black_scholes_forward(self.kind, x, t, self.variance, self.q_r, self.strike)
    }

    /// `x`-part of the load vector: `K int h_m(x) e^{-gamma |x|} N(x; mean, s2 t) dx`.
    pub fn load_x(&self, basis: &TensorBasis, gamma: f64, t: f64) -> DVector<f64> {
        let k = self.strike;
        if t <= 0.0 {
            return DVector::from_vec(basis.hermite(0.0)) * k;
        }
        let sd = (self.variance * t).sqrt();
        let mean = (self.q_r + 0.5 * self.variance) * t;
        let (lo, hi) = (mean - 12.0 * sd, mean + 12.0 * sd);
        let (nodes, weights) = gauss_legendre(24);
        let mut edges: Vec<f64> = (0..=16).map(|i| lo + (hi - lo) * i as f64 / 16.0).collect();
        if lo < 0.0 && hi > 0.0 {
            edges.push(0.0);
            edges.sort_by(|a, b| a.partial_cmp(b).expect("finite edges"));
        }
        let mut out = DVector::zeros(basis.m_max() + 1);
        for win in edges.windows(2) {
            let (h, m) = (0.5 * (win[1] - win[0]), 0.5 * (win[1] + win[0]));
            if h <= 0.0 {
                continue;
            }
            for (g, wt) in nodes.iter().zip(&weights) {
                let x = m + h * g;
                let z = (x - mean) / sd;
                let dens = (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt());
                let factor = k * dens * (-gamma * x.abs()).exp() * h * wt;
                for (o, hv) in out.iter_mut().zip(basis.hermite(x)) {
                    *o += factor * hv;
                }
            }
        }
        out
    }

    /// `xi`-part of the load vector: `int ((sigma xi - s2) / 2) l_n xi^(beta-1) e^{-mu xi}`.
    pub fn load_xi(&self, basis: &TensorBasis, grid: &QuadratureGrid, w: &WeightParams, sigma: f64) -> DVector<f64> {
        let w2 = grid.xi_weights(w.beta, w.mu);
        let mut out = DVector::zeros(basis.n_max() + 1);
        for (xi, wk) in grid.xi.iter().zip(&w2) {
            let coef = 0.5 * (sigma * xi - self.variance) * wk;
            for (o, l) in out.iter_mut().zip(basis.laguerre(*xi)) {
                *o += coef * l;
            }
        }
        out
    }
}

/// How the PDE price is represented.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "method", deny_unknown_fields)]
pub enum Method {
    /// Project the payoff and evolve it.
    Direct,
    /// Evolve the remainder against a Black-Scholes reference price.
    #[default]
    Residual,
}

/// A Galerkin state at time-to-maturity `t`, with the reference part if any.
#[derive(Debug, Clone, PartialEq)]
pub struct PdeSolution {
    /// Basis of the state.
    pub basis: TensorBasis,
    /// Reduced parameters the state was computed with.
    pub params: TransformedParams,
    /// Time to maturity.
    pub t: f64,
    /// Coefficients of `u` (direct) or of `u - g` (residual).
    pub coeffs: CoefficientVector,
    /// Reference price `g` for the residual pipeline.
    pub reference: Option<ReferenceBs>,
}

impl PdeSolution {
    /// `u(x, xi, t)`.
    pub fn value(&self, x: f64, xi: f64) -> Result<f64> {
        let w = self.basis.eval_sum(&self.coeffs, x, xi)?.re;
        Ok(w + self.reference.map_or(0.0, |r| r.value(x, self.t)))
    }

    /// `du/dxi(x, xi, t)` by analytic differentiation of the basis.
    pub fn du_dxi(&self, x: f64, xi: f64) -> Result<f64> {
        Ok(self.basis.eval_sum_dxi(&self.coeffs, x, xi)?.re)
    }
}

/// Everything needed to run a PDE price.
#[derive(Debug, Clone)]
pub struct PdeSetup {
    /// Tensor basis.
    pub basis: TensorBasis,
    /// Quadrature grid.
    pub grid: QuadratureGrid,
    /// Weight exponents.
    pub weight: WeightParams,
}

/// Output of [`solve_pde`].
#[derive(Debug, Clone)]
pub struct PdeRun {
    /// Assembled matrices.
    pub matrices: OperatorMatrices,
    /// Time-stepping output.
    pub evolution: Evolution,
    /// Projection of the payoff for the direct pipeline.
    pub projection: Option<Projection>,
    /// Reference price for the residual pipeline.
    pub reference: Option<ReferenceBs>,
}

impl PdeRun {
    /// Solution at the final time.
    pub fn final_solution(&self) -> PdeSolution {
        self.solution_from(self.evolution.report.steps.last().map_or(0.0, |s| s.t), self.evolution.final_state.clone())
    }

    fn solution_from(&self, t: f64, coeffs: CoefficientVector) -> PdeSolution {
        PdeSolution {
            basis: self.matrices.basis.clone(),
            params: self.matrices.params,
            t,
            coeffs,
            reference: self.reference,
        }
    }

    /// Stored solution closest to time `t` (requires `keep_states`).
    pub fn solution_at(&self, t: f64) -> Option<PdeSolution> {
        let ev = &self.evolution;
        let (k, _) = ev
            .times
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().partial_cmp(&(b.1 - t).abs()).expect("finite times"))?;
        Some(self.solution_from(ev.times[k], ev.states[k].clone()))
    }
}

/// Solves the pricing PDE for a vanilla or custom payoff.
///
/// The residual pipeline needs a vanilla payoff and a reference variance.
pub fn solve_pde(
    model: &ModelParams,
    payoff: &Payoff,
    setup: &PdeSetup,
    cfg: &SolveConfig,
    method: Method,
    reference_variance: f64,
) -> Result<PdeRun> {
    let t = transform(model)?;
    let PdeSetup { basis, grid, weight } = setup;
    let matrices = assemble(basis, grid, &t, weight)?;
    match method {
        Method::Direct => {
            let projection = project_payoff(payoff, basis, grid, weight)?;
            let evolution = evolve(&matrices, &projection.coeffs, cfg, None)?;
            Ok(PdeRun {
                matrices,
                evolution,
                projection: Some(projection),
                reference: None,
            })
        }
        Method::Residual => {
            let kind = payoff
                .kind()
                .ok_or_else(|| invalid("method", "the residual pipeline needs a vanilla payoff"))?;
            if !(reference_variance.is_finite() && reference_variance > 0.0) {
                return Err(invalid("reference_variance", format!("must be > 0, got {reference_variance}")));
            }
            let reference = ReferenceBs {
                kind,
                strike: payoff.strike(),
                variance: reference_variance,
                q_r: t.q_r,
            };
            let bxi = reference.load_xi(basis, grid, weight, t.sigma);
            let gamma = weight.gamma;
            let forcing = move |time: f64| -> DVector<Complex64> {
                let bx = reference.load_x(basis, gamma, time);
                bx.kronecker(&bxi).map(|v| Complex64::new(v, 0.0))
            };
            let c0 = CoefficientVector::zeros(basis);
            let evolution = evolve(&matrices, &c0, cfg, Some(&forcing))?;
            Ok(PdeRun {
                matrices,
                evolution,
                projection: None,
                reference: Some(reference),
            })
        }
    }
}

/// Prices and `du/dxi` on a grid in `x` and `v`, at one time to maturity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSurface {
    /// Time to maturity.
    pub t: f64,
    /// Log-moneyness nodes.
    pub x: Vec<f64>,
    /// Variance nodes.
    pub v: Vec<f64>,
    /// `price[i][k]` at `(x[i], v[k])`.
    pub price: Vec<Vec<f64>>,
    /// `du/dxi` at `(x[i], v[k] / sigma)`.
    pub du_dxi: Vec<Vec<f64>>,
}

impl PriceSurface {
    /// Nodes `(i, k)` where the price is below `-tol`, the flag for
    /// nonnegative payoffs.
    pub fn negative_nodes(&self, tol: f64) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (i, row) in self.price.iter().enumerate() {
            for (k, p) in row.iter().enumerate() {
                if *p < -tol {
                    out.push((i, k));
                }
            }
        }
        out
    }

    /// Every price and derivative is finite and the shape matches the axes.
    pub fn is_consistent(&self) -> bool {
        let shape = |m: &Vec<Vec<f64>>| m.len() == self.x.len() && m.iter().all(|r| r.len() == self.v.len());
        shape(&self.price) && shape(&self.du_dxi) && self.price.iter().chain(&self.du_dxi).flatten().all(|v| v.is_finite())
    }

    /// Writes columns `x, v, p, du_dxi`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["x", "v", "p", "du_dxi"])?;
        for (i, x) in self.x.iter().enumerate() {
            for (k, v) in self.v.iter().enumerate() {
                wr.write_record([
                    format!("{x:e}"),
                    format!("{v:e}"),
                    format!("{:e}", self.price[i][k]),
                    format!("{:e}", self.du_dxi[i][k]),
                ])?;
            }
        }
        wr.flush()?;
        Ok(())
    }
}

/// Option prices `e^{-r t} u(x, v / sigma, t)` on an `(x, v)` grid.
///
/// At `t = 0` the payoff itself is returned with zero `xi`-derivative.
pub fn price_surface(sol: &PdeSolution, payoff: &Payoff, m: &ModelParams, x: &[f64], v: &[f64]) -> Result<PriceSurface> {
    let t = transform(m)?;
    let p = &sol.params;
    let same = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0);
    if !(same(t.kappa_star, p.kappa_star) && same(t.theta_star, p.theta_star) && same(t.sigma, p.sigma) && same(t.rho, p.rho) && same(t.q_r, p.q_r)) {
        return Err(Error::Mismatch("model parameters differ from those of the solved state".into()));
    }
    if v.iter().any(|&vk| !(vk > 0.0)) {
        return Err(Error::Domain("variance nodes must be positive".into()));
    }
    let disc = (-m.r * sol.t).exp();
    let mut price = vec![vec![0.0; v.len()]; x.len()];
    let mut du = vec![vec![0.0; v.len()]; x.len()];
    for (i, &xi_) in x.iter().enumerate() {
        for (k, &vk) in v.iter().enumerate() {
            if sol.t == 0.0 {
                price[i][k] = payoff.eval(xi_);
            } else {
                let xi = vk / t.sigma;
                price[i][k] = disc * sol.value(xi_, xi)?;
                du[i][k] = sol.du_dxi(xi_, xi)?;
            }
        }
    }
    Ok(PriceSurface {
        t: sol.t,
        x: x.to_vec(),
        v: v.to_vec(),
        price,
        du_dxi: du,
    })
}

/// Interior evaluation grid of the completeness diagnostic:
/// `x` in `[-1.5, 1.5]`, `xi` in `[0.1, 4] theta_sigma`, 60 x 60 cells.
pub fn interior_grid(t: &TransformedParams) -> (Vec<f64>, Vec<f64>) {
    let cells = 60;
    let x = (0..=cells).map(|i| -1.5 + 3.0 * i as f64 / cells as f64).collect();
    let (lo, hi) = (0.1 * t.theta_sigma, 4.0 * t.theta_sigma);
    let xi = (0..=cells).map(|k| lo + (hi - lo) * k as f64 / cells as f64).collect();
    (x, xi)
}

/// Evaluates `du/dxi` of a solution on the interior grid.
pub fn interior_derivative(sol: &PdeSolution) -> Result<(Vec<f64>, Vec<f64>, DMatrix<f64>)> {
    let (x, xi) = interior_grid(&sol.params);
    let mut d = DMatrix::zeros(x.len(), xi.len());
    for (i, &xv) in x.iter().enumerate() {
        for (k, &xk) in xi.iter().enumerate() {
            d[(i, k)] = sol.du_dxi(xv, xk)?;
        }
    }
    Ok((x, xi, d))
}

/// Completeness diagnostic at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletenessEntry {
    /// Time to maturity.
    pub t: f64,
    /// Smallest `du/dxi` on the grid.
    pub min_du_dxi: f64,
    /// Smallest `|du/dxi|` on the grid.
    pub min_abs: f64,
    /// Fraction of nodes with `du/dxi <= 0`.
    pub nonpositive_fraction: f64,
    /// Fraction of cells whose corner values change sign or vanish.
    pub zero_set_fraction: f64,
    /// Sign of `du/dxi` per node: `-1`, `0` or `1`, indexed `[i][k]`.
    pub sign_map: Vec<Vec<i8>>,
}

/// Completeness report over several times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletenessReport {
    /// One entry per time.
    pub entries: Vec<CompletenessEntry>,
    /// Zero-set tolerance.
    pub tolerance: f64,
    /// Every entry has zero-set fraction below the tolerance and `min |du/dxi|` above `zero_tol`.
    pub pass: bool,
}

/// Values below this magnitude count as zero in sign maps.
pub const ZERO_TOL: f64 = 1e-12;

/// Summarizes the sign structure of `du/dxi` on a grid.
pub fn completeness_entry(t: f64, d: &DMatrix<f64>) -> CompletenessEntry {
    let sign = |v: f64| -> i8 {
        if v.abs() <= ZERO_TOL {
            0
        } else if v > 0.0 {
            1
        } else {
            -1
        }
    };
    let (nr, nc) = d.shape();
    let sign_map: Vec<Vec<i8>> = (0..nr).map(|i| (0..nc).map(|k| sign(d[(i, k)])).collect()).collect();
    let mut changed = 0usize;
    for i in 0..nr.saturating_sub(1) {
        for k in 0..nc.saturating_sub(1) {
            let c = [sign_map[i][k], sign_map[i + 1][k], sign_map[i][k + 1], sign_map[i + 1][k + 1]];
            if c.contains(&0) || c.iter().any(|&s| s != c[0]) {
                changed += 1;
            }
        }
    }
    let cells = (nr.saturating_sub(1) * nc.saturating_sub(1)).max(1);
    let nonpos = d.iter().filter(|&&v| v <= 0.0).count();
    CompletenessEntry {
        t,
        min_du_dxi: d.iter().cloned().fold(f64::INFINITY, f64::min),
        min_abs: d.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min),
        nonpositive_fraction: nonpos as f64 / d.len().max(1) as f64,
        zero_set_fraction: changed as f64 / cells as f64,
        sign_map,
    }
}

/// Runs the diagnostic on each solution's interior grid.
pub fn completeness_report(solutions: &[PdeSolution], tolerance: f64) -> Result<CompletenessReport> {
    let mut entries = Vec::with_capacity(solutions.len());
    for s in solutions {
        let (_, _, d) = interior_derivative(s)?;
        entries.push(completeness_entry(s.t, &d));
    }
    let pass = entries.iter().all(|e| e.zero_set_fraction < tolerance && e.min_abs > ZERO_TOL);
    Ok(CompletenessReport { entries, tolerance, pass })
}
