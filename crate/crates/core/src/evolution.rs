//! Time stepping of the Galerkin system `M c' + A c = b(t)` by the theta
//! scheme, for the real and complex-shifted forms as well as the
//! path-dependent operator obtained by moving along a complex path in
//! `(x, xi, t)`, together with the energy envelopes these solutions obey.
//!
//! The path is
//!
//! ```text
//! x + i y0 chi(s/T'),   xi (1 + i omega0 chi(s/T')),   t = (1 + i phi) s,   chi(u) = min{u, 1}
//! ```
//!
//! and the evolved function `v(s)` satisfies `v' = -B(s) v` with
//!
//! ```text
//! B = (1 + i phi) A - i (y0/T') L1 - i (omega0/T') L2
//!   + (i/2)(1 + i phi) sigma omega0 L3 + i (1 + i phi) kappa theta_sigma omega0 L4
//! L1 = chi' d/dx
//! L2 = chi' g xi d/dxi
//! L3 = -chi xi [d2/dx2 - g d2/dxi2 - d/dx]
//! L4 = chi g d/dxi,    g = (1 + i chi omega0)^(-1)
//! ```

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::basis::{CoefficientVector, TensorBasis};
use crate::error::{invalid, Error, Result};
use crate::operator::{explicit_bound, OperatorMatrices, ShiftParams};
use crate::params::{CoercivityConstants, WeightParams};
use crate::quadspace::QuadratureGrid;

/// Relative tolerance of envelope and step checks.
pub const ENVELOPE_TOL: f64 = 1e-6;

/// Time-stepping configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    /// Nominal step; the actual step divides `t_end` evenly.
    pub dt: f64,
    /// Implicitness in `[1/2, 1]`: 1 is implicit Euler, 1/2 is trapezoidal.
    #[serde(default = "default_theta")]
    pub theta_scheme: f64,
    /// Final time.
    pub t_end: f64,
    /// Keep the state after every step.
    #[serde(default)]
    pub keep_states: bool,
}

fn default_theta() -> f64 {
    1.0
}

impl SolveConfig {
    /// Implicit Euler configuration.
    pub fn implicit_euler(dt: f64, t_end: f64) -> Self {
        Self {
            dt,
            theta_scheme: 1.0,
            t_end,
            keep_states: false,
        }
    }

    /// Checks the invariants and returns the step count and actual step.
    pub fn steps(&self) -> Result<(usize, f64)> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(invalid("dt", format!("must be > 0, got {}", self.dt)));
        }
        if !(self.t_end.is_finite() && self.t_end >= self.dt) {
            return Err(invalid("t_end", format!("must be >= dt, got {}", self.t_end)));
        }
        if !(0.5..=1.0).contains(&self.theta_scheme) {
            return Err(invalid("theta_scheme", format!("must lie in [1/2, 1], got {}", self.theta_scheme)));
        }
        let n = ((self.t_end / self.dt) - 1e-9).ceil().max(1.0) as usize;
        Ok((n, self.t_end / n as f64))
    }
}

/// Load vector `b_j(t) = (f(t), e_j)_H` of a forcing term.
pub type Forcing<'a> = &'a (dyn Fn(f64) -> DVector<Complex64> + Sync);

/// Record of one time step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    /// Step index, zero for the initial state.
    pub step: usize,
    /// Time (or path parameter).
    pub t: f64,
    /// `||c||_H = sqrt(c^H M c)`.
    pub h_norm: f64,
    /// `||c||_V`.
    pub v_norm: f64,
    /// Envelope value at this time.
    pub envelope: f64,
    /// `(envelope - h_norm) / envelope`.
    pub slack: f64,
    /// Envelope or step check violated beyond tolerance.
    pub violation: bool,
}

/// Norm history of a solve with envelope checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryReport {
    /// One record per time level, starting with the initial state.
    pub steps: Vec<TrajectoryStep>,
    /// Growth constant `c` of the envelope `e^{c t}`.
    pub rate: f64,
    /// Largest `(h_norm - envelope) / envelope` over all steps.
    pub max_excess: f64,
    /// Largest observed `log(h_{n+1}/h_n) / dt`.
    pub empirical_rate: f64,
    /// Indices of steps violating the envelope or the step check.
    pub violations: Vec<usize>,
}

impl TrajectoryReport {
    /// No step violated its bound.
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }

    /// Writes the columns `step, t, h_norm, v_norm, envelope, slack, violation`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["step", "t", "h_norm", "v_norm", "envelope", "slack", "violation"])?;
        for s in &self.steps {
            wr.write_record([
                s.step.to_string(),
                format!("{:e}", s.t),
                format!("{:e}", s.h_norm),
                format!("{:e}", s.v_norm),
                format!("{:e}", s.envelope),
                format!("{:e}", s.slack),
                s.violation.to_string(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Output of a solve.
#[derive(Debug, Clone, PartialEq)]
pub struct Evolution {
    /// Norm history and envelope checks.
    pub report: TrajectoryReport,
    /// State at the final time.
    pub final_state: CoefficientVector,
    /// States after every step when requested, starting with the initial state.
    pub states: Vec<CoefficientVector>,
    /// Time of every stored state.
    pub times: Vec<f64>,
}

struct Norms {
    m: DMatrix<f64>,
    energy: DMatrix<f64>,
}

fn real_form(m: &DMatrix<f64>, c: &DVector<Complex64>) -> f64 {
    let (re, im) = split(c);
    let imag = if im.iter().all(|v| *v == 0.0) { 0.0 } else { im.dot(&(m * &im)) };
    (re.dot(&(m * &re)) + imag).max(0.0)
}

impl Norms {
    fn new(mats: &OperatorMatrices) -> Self {
        Self {
            m: mats.m.clone(),
            energy: mats.stiffness() + &mats.m,
        }
    }

    fn h(&self, c: &DVector<Complex64>) -> f64 {
        real_form(&self.m, c).sqrt()
    }

    fn v(&self, c: &DVector<Complex64>) -> f64 {
        real_form(&self.energy, c).sqrt()
    }

    fn dual(&self, chol: &nalgebra::Cholesky<f64, nalgebra::Dyn>, b: &DVector<Complex64>) -> f64 {
        let (re, im) = split(b);
        (re.dot(&chol.solve(&re)) + im.dot(&chol.solve(&im))).max(0.0).sqrt()
    }
}

fn lu_condition<T: nalgebra::ComplexField<RealField = f64>>(u: &DMatrix<T>) -> f64 {
    let diag: Vec<f64> = (0..u.nrows().min(u.ncols())).map(|i| u[(i, i)].clone().modulus()).collect();
    let max = diag.iter().cloned().fold(0.0, f64::max);
    let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

fn complex_lu(m: DMatrix<Complex64>, context: &str) -> Result<nalgebra::LU<Complex64, nalgebra::Dyn, nalgebra::Dyn>> {
    let lu = m.lu();
    let cond = lu_condition(&lu.u());
    if !lu.is_invertible() || !cond.is_finite() || cond > 1e15 {
        return Err(Error::Singular {
            context: context.into(),
            condition: cond,
        });
    }
    Ok(lu)
}

struct Tracker<'a> {
    norms: &'a Norms,
    rate: f64,
    step_rate: Option<f64>,
    dt: f64,
    base: f64,
    forcing_integral: f64,
    steps: Vec<TrajectoryStep>,
    violations: Vec<usize>,
    max_excess: f64,
    empirical: f64,
}

impl<'a> Tracker<'a> {
    fn new(norms: &'a Norms, rate: f64, step_rate: Option<f64>, dt: f64, c0: &DVector<Complex64>) -> Self {
        let h0 = norms.h(c0);
        let mut t = Self {
            norms,
            rate,
            step_rate,
            dt,
            base: h0,
            forcing_integral: 0.0,
            steps: Vec::new(),
            violations: Vec::new(),
            max_excess: f64::NEG_INFINITY,
            empirical: f64::NEG_INFINITY,
        };
        t.record(0, 0.0, c0, None);
        t
    }

    fn record(&mut self, step: usize, time: f64, c: &DVector<Complex64>, prev_h: Option<f64>) {
        let h = self.norms.h(c);
        let envelope = (self.rate * time).exp() * (self.base + self.forcing_integral);
        let excess = if envelope > 0.0 {
            (h - envelope) / envelope
        } else if h > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        let mut violation = excess > ENVELOPE_TOL;
        if let (Some(sr), Some(ph)) = (self.step_rate, prev_h) {
            if h * h > (sr * self.dt).exp() * ph * ph * (1.0 + ENVELOPE_TOL) {
                violation = true;
            }
        }
        if let Some(ph) = prev_h {
            if ph > 0.0 && h > 0.0 {
                self.empirical = self.empirical.max((h / ph).ln() / self.dt);
            }
        }
        if violation {
            self.violations.push(step);
        }
        self.max_excess = self.max_excess.max(excess);
        self.steps.push(TrajectoryStep {
            step,
            t: time,
            h_norm: h,
            v_norm: self.norms.v(c),
            envelope,
            slack: if envelope > 0.0 { (envelope - h) / envelope } else { 0.0 },
            violation,
        });
    }

    fn last_h(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.h_norm)
    }

    fn finish(self) -> TrajectoryReport {
        TrajectoryReport {
            steps: self.steps,
            rate: self.rate,
            max_excess: self.max_excess,
            empirical_rate: if self.empirical.is_finite() { self.empirical } else { 0.0 },
            violations: self.violations,
        }
    }
}

fn check_state(mats: &OperatorMatrices, c0: &CoefficientVector) -> Result<()> {
    if c0.m_max != mats.basis.m_max() || c0.n_max != mats.basis.n_max() {
        return Err(Error::Mismatch(format!(
            "state orders ({}, {}) differ from operator basis ({}, {})",
            c0.m_max,
            c0.n_max,
            mats.basis.m_max(),
            mats.basis.n_max()
        )));
    }
    if c0.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("initial state is not finite".into()));
    }
    Ok(())
}

fn growth(mats: &OperatorMatrices) -> CoercivityConstants {
    CoercivityConstants::compute(&mats.params, &mats.weight)
}

fn split(v: &DVector<Complex64>) -> (DVector<f64>, DVector<f64>) {
    (v.map(|z| z.re), v.map(|z| z.im))
}

fn join(re: &DVector<f64>, im: &DVector<f64>) -> DVector<Complex64> {
    DVector::from_fn(re.len(), |i, _| Complex64::new(re[i], im[i]))
}

/// Real solve of `M c' + A c = b(t)`.
///
/// The envelope is `e^{(c2'/2) t} (||c0||_H + int ||b||_{H'})`, where the
/// dual norm of the load vector is `sqrt(b^H M^-1 b)`.
pub fn evolve(mats: &OperatorMatrices, c0: &CoefficientVector, cfg: &SolveConfig, forcing: Option<Forcing<'_>>) -> Result<Evolution> {
    check_state(mats, c0)?;
    let (n, dt) = cfg.steps()?;
    let th = cfg.theta_scheme;
    let lhs = &mats.m + &mats.a * (dt * th);
    let lu = lhs.lu();
    let cond = lu_condition(&lu.u());
    if !lu.is_invertible() || !cond.is_finite() || cond > 1e15 {
        return Err(Error::Singular {
            context: "implicit step matrix".into(),
            condition: cond,
        });
    }
    let explicit = &mats.m - &mats.a * (dt * (1.0 - th));
    let norms = Norms::new(mats);
    let mass_chol = match forcing {
        Some(_) => Some(norms.m.clone().cholesky().ok_or_else(|| Error::Singular {
            context: "mass matrix".into(),
            condition: f64::INFINITY,
        })?),
        None => None,
    };
    let rate = 0.5 * growth(mats).c2_prime;
    let mut state = c0.to_vector();
    let mut tracker = Tracker::new(&norms, rate, None, dt, &state);
    let mut states = Vec::new();
    let mut times = Vec::new();
    if cfg.keep_states {
        states.push(c0.clone());
        times.push(0.0);
    }
    let mut f_prev = forcing.map(|f| f(0.0));
    for k in 1..=n {
        let t = k as f64 * dt;
        let (re, im) = split(&state);
        let mut rhs_re = &explicit * re;
        let mut rhs_im = if im.iter().all(|v| *v == 0.0) { im } else { &explicit * im };
        if let Some(f) = forcing {
            let fp = f_prev.take().expect("forcing at previous level");
            let fnext = f(t);
            let load = &fnext * Complex64::new(th * dt, 0.0) + &fp * Complex64::new((1.0 - th) * dt, 0.0);
            let (lr, li) = split(&load);
            rhs_re += lr;
            rhs_im += li;
            let mlu = mass_chol.as_ref().expect("mass factorization");
            tracker.forcing_integral += 0.5 * dt * (norms.dual(mlu, &fp) + norms.dual(mlu, &fnext));
            f_prev = Some(fnext);
        }
        let next_re = lu.solve(&rhs_re).ok_or_else(|| Error::Singular {
            context: format!("implicit step {k}"),
            condition: cond,
        })?;
        let next_im = if rhs_im.iter().all(|v| *v == 0.0) {
            rhs_im
        } else {
            lu.solve(&rhs_im).ok_or_else(|| Error::Singular {
                context: format!("implicit step {k}"),
                condition: cond,
            })?
        };
        let prev_h = tracker.last_h();
        state = join(&next_re, &next_im);
        tracker.record(k, t, &state, Some(prev_h));
        if cfg.keep_states {
            states.push(CoefficientVector::from_vector(&mats.basis, &state)?);
            times.push(t);
        }
    }
    Ok(Evolution {
        report: tracker.finish(),
        final_state: CoefficientVector::from_vector(&mats.basis, &state)?,
        states,
        times,
    })
}

/// Coefficients of `sum c e(x + iy, xi (1 + i omega + omega*))` projected back
/// onto the basis. The unshifted case returns `c` unchanged.
pub fn shifted_initial(
    basis: &TensorBasis,
    grid: &QuadratureGrid,
    w: &WeightParams,
    c: &CoefficientVector,
    s: &ShiftParams,
) -> Result<CoefficientVector> {
    if s.y == 0.0 && s.s() == Complex64::new(0.0, 0.0) {
        return Ok(c.clone());
    }
    let hx = basis.hermite_table_complex(grid, s.y);
    let lxi = basis.laguerre_table_complex(grid, Complex64::new(1.0, 0.0) + s.s());
    let cm = DMatrix::from_fn(basis.m_max() + 1, basis.n_max() + 1, |m, n| c.get(m, n));
    let samples = hx.transpose() * cm * lxi;
    Ok(basis.project_samples(&samples, grid, w)?.coeffs)
}

fn complex_theta_solve(
    mats: &OperatorMatrices,
    c0: &CoefficientVector,
    cfg: &SolveConfig,
    a: &DMatrix<Complex64>,
    rate: f64,
) -> Result<Evolution> {
    let (n, dt) = cfg.steps()?;
    let th = cfg.theta_scheme;
    let m = mats.m.map(|v| Complex64::new(v, 0.0));
    let lu = complex_lu(&m + a * Complex64::new(dt * th, 0.0), "shifted implicit step matrix")?;
    let explicit = &m - a * Complex64::new(dt * (1.0 - th), 0.0);
    let norms = Norms::new(mats);
    let mut state = c0.to_vector();
    let mut tracker = Tracker::new(&norms, rate, None, dt, &state);
    let (mut states, mut times) = (Vec::new(), Vec::new());
    if cfg.keep_states {
        states.push(c0.clone());
        times.push(0.0);
    }
    for k in 1..=n {
        let rhs = &explicit * &state;
        let prev_h = norms.h(&state);
        state = lu.solve(&rhs).ok_or_else(|| Error::Singular {
            context: format!("shifted step {k}"),
            condition: f64::INFINITY,
        })?;
        tracker.record(k, k as f64 * dt, &state, Some(prev_h));
        if cfg.keep_states {
            states.push(CoefficientVector::from_vector(&mats.basis, &state)?);
            times.push(k as f64 * dt);
        }
    }
    Ok(Evolution {
        report: tracker.finish(),
        final_state: CoefficientVector::from_vector(&mats.basis, &state)?,
        states,
        times,
    })
}

/// Solve with the complex-shifted form. `v0` must already hold the shifted
/// initial data (see [`shifted_initial`]). At `(omega, omega*) = (0, 0)` this
/// reproduces [`evolve`] up to rounding.
///
/// The envelope is `e^{(c2'/2) t} ||v0||_H`.
pub fn evolve_shifted(mats: &OperatorMatrices, s: &ShiftParams, v0: &CoefficientVector, cfg: &SolveConfig) -> Result<Evolution> {
    s.check()?;
    check_state(mats, v0)?;
    let a = mats.shifted_with(&mats.templates(), s);
    complex_theta_solve(mats, v0, cfg, &a, 0.5 * growth(mats).c2_prime)
}

/// Parameters of the complex path and of the region `Gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathParams {
    /// Final imaginary shift in `x`.
    pub y0: f64,
    /// Final ray slope in `xi`.
    pub omega0: f64,
    /// Rotation of the time axis.
    pub phi: f64,
    /// Length of the ramp `chi(s/T')`.
    pub t_prime: f64,
    /// Opening of the `(y, arctan omega)` region.
    pub kappa0: f64,
    /// Opening of the time sector.
    pub nu0: f64,
}

impl PathParams {
    /// Checks `max{|y0|, |arctan omega0|} < kappa0 T'`, `|phi| < 1/nu0` and `kappa0 T' <= pi/4`.
    pub fn check(&self) -> Result<()> {
        let vals = [self.y0, self.omega0, self.phi, self.t_prime, self.kappa0, self.nu0];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::Inadmissible("path parameters must be finite".into()));
        }
        if !(self.t_prime > 0.0 && self.kappa0 > 0.0 && self.nu0 > 0.0) {
            return Err(Error::Inadmissible("T', kappa0 and nu0 must be positive".into()));
        }
        let reach = self.kappa0 * self.t_prime;
        let spread = self.y0.abs().max(self.omega0.atan().abs());
        if !(spread < reach) {
            return Err(Error::Inadmissible(format!(
                "max(|y0|, |arctan omega0|) = {spread} violates < kappa0 T' = {reach}"
            )));
        }
        if !(self.phi.abs() < 1.0 / self.nu0) {
            return Err(Error::Inadmissible(format!("|phi| = {} violates < 1/nu0 = {}", self.phi.abs(), 1.0 / self.nu0)));
        }
        if reach > std::f64::consts::FRAC_PI_4 {
            return Err(Error::Inadmissible(format!("kappa0 T' = {reach} exceeds pi/4")));
        }
        Ok(())
    }

    /// Path with every shift zero.
    pub fn zero(t_prime: f64, kappa0: f64, nu0: f64) -> Self {
        Self {
            y0: 0.0,
            omega0: 0.0,
            phi: 0.0,
            t_prime,
            kappa0,
            nu0,
        }
    }
}

/// Which discretization of the second-order operator `L3` to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum L3Form {
    /// Second derivatives applied to the basis and integrated against test functions.
    #[default]
    Strong,
    /// Second derivatives moved onto the weighted test function by parts.
    ByParts,
}

/// Real blocks of the path operator, independent of `s`.
pub struct PathBlocks {
    a: DMatrix<f64>,
    l1: DMatrix<f64>,
    l2: DMatrix<f64>,
    l3_plain: DMatrix<f64>,
    l3_xi: DMatrix<f64>,
    l4: DMatrix<f64>,
    m: DMatrix<f64>,
    sigma: f64,
    kappa_theta_sigma: f64,
}

impl PathBlocks {
    /// Builds the blocks from assembled factors.
    pub fn new(mats: &OperatorMatrices, form: L3Form) -> Self {
        let f = &mats.factors;
        let WeightParams { beta, gamma, mu } = mats.weight;
        let (exx, e2) = match form {
            L3Form::Strong => (f.exx.clone(), f.e2.clone()),
            L3Form::ByParts => (-&f.dxx + &f.cxs * gamma, -&f.d1 - &f.c0 * beta + &f.c1 * mu),
        };
        Self {
            a: mats.a.clone(),
            l1: f.cx.kronecker(&f.m0),
            l2: f.mx.kronecker(&f.c1),
            l3_plain: (exx - &f.cx).kronecker(&f.m1),
            l3_xi: f.mx.kronecker(&e2),
            l4: f.mx.kronecker(&f.c0),
            m: mats.m.clone(),
            sigma: mats.params.sigma,
            kappa_theta_sigma: mats.params.kappa_theta() / mats.params.sigma,
        }
    }

    /// Galerkin matrices of `L1 .. L4` at given `chi` and `chi'`.
    pub fn l_matrices(&self, chi: f64, dchi: f64, omega0: f64) -> [DMatrix<Complex64>; 4] {
        let g = Complex64::new(1.0, chi * omega0).inv();
        let c = |m: &DMatrix<f64>, k: Complex64| m.map(|v| k * v);
        let mut l3 = c(&self.l3_plain, Complex64::new(-chi, 0.0));
        l3.zip_apply(&self.l3_xi, |o, v| *o += g * chi * v);
        [
            c(&self.l1, Complex64::new(dchi, 0.0)),
            c(&self.l2, g * dchi),
            l3,
            c(&self.l4, g * chi),
        ]
    }

    /// `B(s)` for `chi = chi(s/T')` and `chi' ` on the current interval.
    pub fn operator(&self, p: &PathParams, chi: f64, dchi: f64) -> DMatrix<Complex64> {
        let i = Complex64::new(0.0, 1.0);
        let one_phi = Complex64::new(1.0, p.phi);
        let [l1, l2, l3, l4] = self.l_matrices(chi, dchi, p.omega0);
        let mut b = self.a.map(|v| one_phi * v);
        let coefs = [
            -i * (p.y0 / p.t_prime),
            -i * (p.omega0 / p.t_prime),
            i * 0.5 * one_phi * self.sigma * p.omega0,
            i * one_phi * self.kappa_theta_sigma * p.omega0,
        ];
        for (l, k) in [l1, l2, l3, l4].iter().zip(coefs) {
            if k != Complex64::new(0.0, 0.0) {
                b += l * k;
            }
        }
        b
    }

    fn mass(&self) -> DMatrix<Complex64> {
        self.m.map(|v| Complex64::new(v, 0.0))
    }
}

/// `chi(u) = min{u, 1}`.
pub fn chi(u: f64) -> f64 {
    u.min(1.0)
}

/// `chi'` on the interval `(u0, u1)`: one before the kink, zero after.
pub fn chi_prime_on(u0: f64, u1: f64) -> f64 {
    if 0.5 * (u0 + u1) < 1.0 {
        1.0
    } else {
        0.0
    }
}

/// Solve along the complex path. The step count is chosen so that `s = T'`
/// is a time level. The envelope is `e^{c2' s} ||u0||_H`, and every step
/// must satisfy `||v_{n+1}||^2 <= e^{c2' ds} ||v_n||^2`.
pub fn evolve_along_path(
    mats: &OperatorMatrices,
    p: &PathParams,
    u0: &CoefficientVector,
    cfg: &SolveConfig,
    form: L3Form,
) -> Result<Evolution> {
    p.check()?;
    check_state(mats, u0)?;
    let (n0, _) = cfg.steps()?;
    let (n, ds) = aligned_steps(cfg.t_end, n0, p.t_prime);
    let th = cfg.theta_scheme;
    let blocks = PathBlocks::new(mats, form);
    let m = blocks.mass();
    let norms = Norms::new(mats);
    let c2p = growth(mats).c2_prime;
    let mut state = u0.to_vector();
    let mut tracker = Tracker::new(&norms, c2p, Some(c2p), ds, &state);
    let (mut states, mut times) = (Vec::new(), Vec::new());
    if cfg.keep_states {
        states.push(u0.clone());
        times.push(0.0);
    }
    let mut cached: Option<nalgebra::LU<Complex64, nalgebra::Dyn, nalgebra::Dyn>> = None;
    let mut cached_explicit: Option<DMatrix<Complex64>> = None;
    for k in 1..=n {
        let (s0, s1) = ((k - 1) as f64 * ds, k as f64 * ds);
        let (u_a, u_b) = (s0 / p.t_prime, s1 / p.t_prime);
        let dchi = chi_prime_on(u_a, u_b);
        let frozen = u_a >= 1.0 - 1e-12;
        if !(frozen && cached.is_some()) {
            let b1 = blocks.operator(p, chi(u_b), dchi);
            let b0 = blocks.operator(p, chi(u_a), dchi);
            cached = Some(complex_lu(&m + &b1 * Complex64::new(ds * th, 0.0), "path step matrix")?);
            cached_explicit = Some(&m - &b0 * Complex64::new(ds * (1.0 - th), 0.0));
        }
        let (lu, explicit) = (cached.as_ref().expect("cached"), cached_explicit.as_ref().expect("cached"));
        let rhs = explicit * &state;
        let prev_h = norms.h(&state);
        state = lu.solve(&rhs).ok_or_else(|| Error::Singular {
            context: format!("path step {k}"),
            condition: f64::INFINITY,
        })?;
        if !frozen {
            cached = None;
            cached_explicit = None;
        }
        tracker.record(k, s1, &state, Some(prev_h));
        if cfg.keep_states {
            states.push(CoefficientVector::from_vector(&mats.basis, &state)?);
            times.push(s1);
        }
    }
    Ok(Evolution {
        report: tracker.finish(),
        final_state: CoefficientVector::from_vector(&mats.basis, &state)?,
        states,
        times,
    })
}

/// Smallest step count `>= n0` whose uniform grid on `[0, t_end]` contains `t_prime`.
pub fn aligned_steps(t_end: f64, n0: usize, t_prime: f64) -> (usize, f64) {
    if t_prime >= t_end {
        return (n0, t_end / n0 as f64);
    }
    let ratio = t_end / t_prime;
    for n in n0..n0 * 64 + 64 {
        let k = n as f64 / ratio;
        if (k - k.round()).abs() < 1e-9 {
            return (n, t_end / n as f64);
        }
    }
    (n0, t_end / n0 as f64)
}

/// Membership in `Gamma`: `max{|y|, |arctan omega|} < kappa0 min{alpha, T'}`
/// and `nu0 |tau| < alpha`.
pub fn in_gamma(y: f64, omega: f64, alpha: f64, tau: f64, p: &PathParams) -> bool {
    if !(alpha > 0.0) {
        return false;
    }
    y.abs().max(omega.atan().abs()) < p.kappa0 * alpha.min(p.t_prime) && p.nu0 * tau.abs() < alpha
}

/// Terms of the sufficient smallness condition `C~ <= sigma (1 - |rho|)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmallnessReport {
    /// Boundedness constant used for `A`.
    pub c_bound: f64,
    /// Bound `L` on the path operators relative to the `V` norm.
    pub l_bound: f64,
    /// `2 C / nu0 + 6 L kappa0 + 2 L (1 + 1/nu0)(sigma + 2 kappa theta_sigma) kappa0 T'`.
    pub c_tilde: f64,
    /// `sigma (1 - |rho|)`.
    pub threshold: f64,
    /// Whether `C~ <= sigma (1 - |rho|)`.
    pub holds: bool,
}

/// Evaluates `C~` with `C = C_explicit` and `L` the largest sup of
/// `|(L_j v, w)_H| / (||v||_V ||w||_V)` over the basis span, taken at `chi = chi' = 1`.
pub fn smallness_condition(mats: &OperatorMatrices, p: &PathParams) -> Result<SmallnessReport> {
    let constants = growth(mats);
    let c_bound = explicit_bound(&mats.params, &mats.weight, &constants);
    let blocks = PathBlocks::new(mats, L3Form::Strong);
    let energy = mats.stiffness() + &mats.m;
    let chol = energy.cholesky().ok_or_else(|| Error::Singular {
        context: "V energy matrix".into(),
        condition: f64::INFINITY,
    })?;
    let l = chol.l().map(|v| Complex64::new(v, 0.0));
    let mut l_bound: f64 = 0.0;
    for lj in blocks.l_matrices(1.0, 1.0, p.omega0) {
        let y = l.solve_lower_triangular(&lj).ok_or_else(|| Error::Singular {
            context: "path operator bound".into(),
            condition: f64::INFINITY,
        })?;
        let z = l.solve_lower_triangular(&y.adjoint()).ok_or_else(|| Error::Singular {
            context: "path operator bound".into(),
            condition: f64::INFINITY,
        })?;
        l_bound = l_bound.max(z.singular_values().iter().cloned().fold(0.0, f64::max));
    }
    let t = &mats.params;
    let kts = t.kappa_theta() / t.sigma;
    let c_tilde = 2.0 * c_bound / p.nu0
        + 6.0 * l_bound * p.kappa0
        + 2.0 * l_bound * (1.0 + 1.0 / p.nu0) * (t.sigma + 2.0 * kts) * p.kappa0 * p.t_prime;
    let threshold = t.sigma * (1.0 - t.rho.abs());
    Ok(SmallnessReport {
        c_bound,
        l_bound,
        c_tilde,
        threshold,
        holds: c_tilde <= threshold,
    })
}
