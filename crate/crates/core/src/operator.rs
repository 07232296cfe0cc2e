//! Galerkin matrices of the weighted Heston form and its complex-shifted
//! variant, with randomized certification of the form's bounds.
//!
//! For a trial function `u` and test function `w` the form is
//!
//! ```text
//! a(u, w) = (sigma/2) int (u_x w_x + 2 rho u_xi w_x + u_xi w_xi) xi m
//!         + (sigma/2) int (1 - gamma sign x) u_x w xi m
//!         + int (kappa - gamma rho sigma sign x - mu sigma/2) u_xi w xi m
//!         + q_r int u_x w m
//!         + (beta sigma/2 - kappa theta_sigma) int u_xi w m
//! ```
//!
//! with `m = xi^(beta-1) exp(-gamma |x| - mu xi)` and complex conjugation on
//! `w`. Every integral separates into a product of one-dimensional integrals,
//! so each matrix is a sum of Kronecker products of small `x` and `xi`
//! factors. Rows index test functions and columns index trial functions, so
//! the Galerkin system reads `M c' + A c = b`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::basis::{gram, weighted_product, TensorBasis};
use crate::error::{Error, Result};
use crate::params::{CoercivityConstants, TransformedParams, WeightParams};
use crate::quadspace::QuadratureGrid;

/// Radius `r'` of admissible ray slopes `|omega|` for the shifted form.
pub const SHIFT_RADIUS: f64 = 0.5;
/// Bound on `|omega*|`.
pub const OMEGA_STAR_BOUND: f64 = 0.5;
/// Quadrature slack allowed in certifications, relative to the `V` energy.
pub const CERT_TOL: f64 = 1e-6;

/// One-dimensional factor matrices. `x` factors integrate against
/// `exp(-gamma |x|)`, `xi` factors against `xi^(beta-1) exp(-mu xi)` or `xi`
/// times it. In every mixed factor the row carries the plain test value and
/// the column the differentiated trial function, except `cx_t` where the
/// derivative falls on the test function.
#[derive(Debug, Clone, PartialEq)]
pub struct Factors {
    /// `int h_k h_j`.
    pub mx: DMatrix<f64>,
    /// `int sign(x) h_k h_j`.
    pub mxs: DMatrix<f64>,
    /// `int h_k' h_j'`.
    pub dxx: DMatrix<f64>,
    /// `int h_k' h_j`.
    pub cx: DMatrix<f64>,
    /// `int sign(x) h_k' h_j`.
    pub cxs: DMatrix<f64>,
    /// `int h_k h_j'`.
    pub cx_t: DMatrix<f64>,
    /// `int h_k'' h_j`.
    pub exx: DMatrix<f64>,
    /// `int l_k l_j`.
    pub m0: DMatrix<f64>,
    /// `int xi l_k l_j`.
    pub m1: DMatrix<f64>,
    /// `int xi l_k' l_j'`.
    pub d1: DMatrix<f64>,
    /// `int xi l_k' l_j`.
    pub c1: DMatrix<f64>,
    /// `int l_k' l_j`.
    pub c0: DMatrix<f64>,
    /// `int xi l_k'' l_j`.
    pub e2: DMatrix<f64>,
}

/// Real templates multiplying the shift-dependent scalars of the shifted form.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftTemplates {
    /// `(Dxx + Cx - gamma Cxs) (x) M1`.
    pub t1: DMatrix<f64>,
    /// `Mx (x) D1`.
    pub t2: DMatrix<f64>,
    /// `Mx (x) C1`.
    pub t3: DMatrix<f64>,
    /// `Mx (x) C0`.
    pub t4: DMatrix<f64>,
}

/// Mass matrix `M`, form matrix `A`, and the factors they are built from.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrices {
    /// Basis the matrices were assembled on.
    pub basis: TensorBasis,
    /// Reduced model parameters.
    pub params: TransformedParams,
    /// Weight exponents.
    pub weight: WeightParams,
    /// One-dimensional factors.
    pub factors: Factors,
    /// `M_jk = (e_k, e_j)_H`.
    pub m: DMatrix<f64>,
    /// `A_jk = a(e_k, e_j)`.
    pub a: DMatrix<f64>,
}

/// Parameters of a complex shift `x -> x + iy`, `xi -> xi (1 + i omega + omega*)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShiftParams {
    /// Imaginary shift in `x`; the form does not depend on it.
    #[serde(default)]
    pub y: f64,
    /// Slope of the rotated `xi` ray.
    pub omega: f64,
    /// Complex perturbation of the ray.
    #[serde(default = "zero_complex")]
    pub omega_star: Complex64,
}

fn zero_complex() -> Complex64 {
    Complex64::new(0.0, 0.0)
}

impl ShiftParams {
    /// Shift with `omega* = 0`.
    pub fn new(y: f64, omega: f64) -> Self {
        Self {
            y,
            omega,
            omega_star: zero_complex(),
        }
    }

    /// `i omega + omega*`.
    pub fn s(&self) -> Complex64 {
        Complex64::new(0.0, self.omega) + self.omega_star
    }

    /// Refuses shifts outside `|omega| < r'` and `|omega*| <= 1/2`.
    pub fn check(&self) -> Result<()> {
        if !self.y.is_finite() || !self.omega.is_finite() || !self.omega_star.is_finite() {
            return Err(Error::Inadmissible("shift parameters must be finite".into()));
        }
        if self.omega.abs() >= SHIFT_RADIUS {
            return Err(Error::Inadmissible(format!(
                "|omega| = {} violates |omega| < {SHIFT_RADIUS}",
                self.omega.abs()
            )));
        }
        if self.omega_star.norm() > OMEGA_STAR_BOUND {
            return Err(Error::Inadmissible(format!(
                "|omega*| = {} violates |omega*| <= {OMEGA_STAR_BOUND}",
                self.omega_star.norm()
            )));
        }
        Ok(())
    }
}

fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// Builds the one-dimensional factors on a grid.
pub fn assemble_factors(basis: &TensorBasis, grid: &QuadratureGrid, w: &WeightParams) -> Factors {
    let t = basis.tables(grid);
    let w1 = grid.x_weights(w.gamma);
    let w1s: Vec<f64> = w1.iter().zip(&grid.x).map(|(v, x)| v * x.signum()).collect();
    let w2 = grid.xi_weights(w.beta, w.mu);
    let w2x: Vec<f64> = w2.iter().zip(&grid.xi).map(|(v, xi)| v * xi).collect();
    let (h, dh, d2h) = (&t.x.value, &t.x.d1, &t.x.d2);
    let (l, dl, d2l) = (&t.xi.value, &t.xi.d1, &t.xi.d2);
    let mxs = weighted_product(h, &w1s, h);
    Factors {
        mx: gram(h, &w1),
        mxs: (&mxs + mxs.transpose()) * 0.5,
        dxx: gram(dh, &w1),
        cx: weighted_product(h, &w1, dh),
        cxs: weighted_product(h, &w1s, dh),
        cx_t: weighted_product(dh, &w1, h),
        exx: weighted_product(h, &w1, d2h),
        m0: gram(l, &w2),
        m1: gram(l, &w2x),
        d1: gram(dl, &w2x),
        c1: weighted_product(l, &w2x, dl),
        c0: weighted_product(l, &w2, dl),
        e2: weighted_product(l, &w2x, d2l),
    }
}

/// Assembles `M` and `A` on a basis and grid.
pub fn assemble(basis: &TensorBasis, grid: &QuadratureGrid, t: &TransformedParams, w: &WeightParams) -> Result<OperatorMatrices> {
    if grid.x.is_empty() || grid.xi.is_empty() {
        return Err(Error::Mismatch("quadrature grid is empty".into()));
    }
    let f = assemble_factors(basis, grid, w);
    let (sigma, rho, kappa, q_r) = (t.sigma, t.rho, t.kappa_star, t.q_r);
    let WeightParams { beta, gamma, mu } = *w;
    let half = 0.5 * sigma;
    let mut a = kron(&f.dxx, &f.m1) * half;
    a += kron(&f.cx_t, &f.c1) * (sigma * rho);
    a += kron(&f.mx, &f.d1) * half;
    a += kron(&(&f.cx - &f.cxs * gamma), &f.m1) * half;
    a += kron(&f.mx, &f.c1) * (kappa - mu * half);
    a -= kron(&f.mxs, &f.c1) * (gamma * rho * sigma);
    a += kron(&f.cx, &f.m0) * q_r;
    a += kron(&f.mx, &f.c0) * (beta * half - t.kappa_star * t.theta_sigma);
    let m = kron(&f.mx, &f.m0);
    Ok(OperatorMatrices {
        basis: basis.clone(),
        params: *t,
        weight: *w,
        factors: f,
        m,
        a,
    })
}

fn to_complex(m: &DMatrix<f64>) -> DMatrix<Complex64> {
    m.map(|v| Complex64::new(v, 0.0))
}

impl OperatorMatrices {
    /// `V`-stiffness `S_jk = int (e_k,x e_j,x + e_k,xi e_j,xi) xi m`.
    pub fn stiffness(&self) -> DMatrix<f64> {
        let f = &self.factors;
        kron(&f.dxx, &f.m1) + kron(&f.mx, &f.d1)
    }

    /// The four real templates of the shifted form.
    pub fn templates(&self) -> ShiftTemplates {
        let f = &self.factors;
        let gamma = self.weight.gamma;
        ShiftTemplates {
            t1: kron(&(&f.dxx + &f.cx - &f.cxs * gamma), &f.m1),
            t2: kron(&f.mx, &f.d1),
            t3: kron(&f.mx, &f.c1),
            t4: kron(&f.mx, &f.c0),
        }
    }

    /// `beta sigma / 2 - kappa theta_sigma`.
    pub fn drift_constant(&self) -> f64 {
        0.5 * self.weight.beta * self.params.sigma - self.params.kappa_theta() / self.params.sigma
    }

    /// Shifted form matrix for given templates; no admissibility check.
    pub fn shifted_with(&self, templates: &ShiftTemplates, s: &ShiftParams) -> DMatrix<Complex64> {
        let sh = s.s();
        let r = sh / (sh + 1.0);
        let half = 0.5 * self.params.sigma;
        let mu = self.weight.mu;
        let mut out = to_complex(&self.a);
        if sh == Complex64::new(0.0, 0.0) {
            return out;
        }
        let terms = [
            (&templates.t1, sh * half),
            (&templates.t2, -r * half),
            (&templates.t3, r * half * mu),
            (&templates.t4, -r * self.drift_constant()),
        ];
        for (t, coef) in terms {
            out.zip_apply(t, |o, v| *o += coef * v);
        }
        out
    }

    /// Derivative of the shifted form in `omega` at the origin.
    pub fn shift_derivative(&self, templates: &ShiftTemplates) -> DMatrix<Complex64> {
        let half = 0.5 * self.params.sigma;
        let real = &templates.t1 * half - &templates.t2 * half + &templates.t3 * (half * self.weight.mu)
            - &templates.t4 * self.drift_constant();
        real.map(|v| Complex64::new(0.0, v))
    }
}

/// Complex form matrix of the shifted operator. `y` never enters.
pub fn assemble_shifted(base: &OperatorMatrices, s: &ShiftParams) -> Result<DMatrix<Complex64>> {
    s.check()?;
    Ok(base.shifted_with(&base.templates(), s))
}

/// Outcome of a randomized certification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertReport {
    /// Which inequality was certified.
    pub name: String,
    /// Number of random states.
    pub trials: usize,
    /// Smallest `(lhs - rhs) / energy` over the trials.
    pub worst_slack: f64,
    /// Constant on the right-hand side (`C_explicit` or the growth constant).
    pub bound: f64,
    /// Sharp value of the same quantity over the whole subspace.
    pub subspace_value: f64,
    /// Whether every trial satisfied the inequality within [`CERT_TOL`].
    pub pass: bool,
}

fn random_state(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex64> {
    (0..n)
        .map(|_| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex64::new(re, im)
        })
        .collect()
}

fn quad_real(m: &DMatrix<f64>, c: &[Complex64], d: &[Complex64]) -> Complex64 {
    // d^H M c
    let n = c.len();
    let mut total = Complex64::new(0.0, 0.0);
    for i in 0..n {
        let mut row = Complex64::new(0.0, 0.0);
        for j in 0..n {
            row += c[j] * m[(i, j)];
        }
        total += d[i].conj() * row;
    }
    total
}

fn quad_complex(m: &DMatrix<Complex64>, c: &[Complex64], d: &[Complex64]) -> Complex64 {
    let n = c.len();
    let mut total = Complex64::new(0.0, 0.0);
    for i in 0..n {
        let mut row = Complex64::new(0.0, 0.0);
        for j in 0..n {
            row += m[(i, j)] * c[j];
        }
        total += d[i].conj() * row;
    }
    total
}

/// Smallest eigenvalue of `K` relative to the SPD matrix `B`, for Hermitian `K`.
fn min_generalized_eigen(k: &DMatrix<Complex64>, b: &DMatrix<f64>) -> Result<f64> {
    let chol = b.clone().cholesky().ok_or_else(|| Error::Singular {
        context: "energy matrix in certification".into(),
        condition: f64::INFINITY,
    })?;
    let l = to_complex(&chol.l());
    let y = l
        .solve_lower_triangular(k)
        .ok_or_else(|| Error::Singular { context: "certification".into(), condition: f64::INFINITY })?;
    let z = l
        .solve_lower_triangular(&y.adjoint())
        .ok_or_else(|| Error::Singular { context: "certification".into(), condition: f64::INFINITY })?;
    let h = (&z + z.adjoint()) * Complex64::new(0.5, 0.0);
    let ev = h.symmetric_eigenvalues();
    Ok(ev.iter().cloned().fold(f64::INFINITY, f64::min))
}

fn garding_generic(
    name: &str,
    a: &DMatrix<Complex64>,
    mats: &OperatorMatrices,
    lower: f64,
    growth: f64,
    trials: usize,
    seed: u64,
) -> Result<CertReport> {
    let s = mats.stiffness();
    let energy = &s + &mats.m;
    let n = mats.m.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    for _ in 0..trials {
        let mut c = random_state(&mut rng, n);
        let mn = quad_real(&mats.m, &c, &c).re.sqrt();
        c.iter_mut().for_each(|v| *v /= mn);
        let lhs = 2.0 * quad_complex(a, &c, &c).re;
        let e = quad_real(&energy, &c, &c).re;
        let rhs = lower * e - growth * quad_real(&mats.m, &c, &c).re;
        worst = worst.min((lhs - rhs) / e);
    }
    // Minimal growth constant making the inequality hold on the subspace.
    let k = (a + a.adjoint()) - to_complex(&energy) * Complex64::new(lower, 0.0);
    let lam = min_generalized_eigen(&k, &mats.m)?;
    Ok(CertReport {
        name: name.into(),
        trials,
        worst_slack: if trials == 0 { 0.0 } else { worst },
        bound: growth,
        subspace_value: -lam,
        pass: trials == 0 || worst >= -CERT_TOL,
    })
}

/// Checks `2 Re(c^H A c) >= sigma (1 - |rho|) c^H (S + M) c - c2' c^H M c`
/// for random complex states of unit `M`-norm.
///
/// `subspace_value` is the smallest growth constant for which the inequality
/// holds on the whole span of the basis.
pub fn certify_garding(mats: &OperatorMatrices, constants: &CoercivityConstants, trials: usize, seed: u64) -> Result<CertReport> {
    let t = &mats.params;
    garding_generic(
        "garding",
        &to_complex(&mats.a),
        mats,
        t.sigma * (1.0 - t.rho.abs()),
        constants.c2_prime,
        trials,
        seed,
    )
}

/// Shifted analogue of [`certify_garding`] with lower constant
/// `(sigma/2)(1 - |rho|)` and growth constant `c2'`.
pub fn certify_garding_shifted(
    mats: &OperatorMatrices,
    shifted: &DMatrix<Complex64>,
    constants: &CoercivityConstants,
    trials: usize,
    seed: u64,
) -> Result<CertReport> {
    let t = &mats.params;
    garding_generic(
        "garding_shifted",
        shifted,
        mats,
        0.5 * t.sigma * (1.0 - t.rho.abs()),
        constants.c2_prime,
        trials,
        seed,
    )
}

/// `C_explicit = (sigma/2) sqrt 6 + M1 max{1, sqrt((2/mu)^2 + 2 beta/mu), sqrt(8/(beta-1)^2 + 2 mu^2/(beta-1)^2)}`.
pub fn explicit_bound(t: &TransformedParams, w: &WeightParams, constants: &CoercivityConstants) -> f64 {
    let b1 = (w.beta - 1.0).powi(2);
    let sob = ((2.0 / w.mu).powi(2) + 2.0 * w.beta / w.mu).sqrt();
    let hardy = (8.0 / b1 + 2.0 * w.mu * w.mu / b1).sqrt();
    0.5 * t.sigma * 6f64.sqrt() + constants.m1 * 1f64.max(sob).max(hardy)
}

/// Ratio `|d^H A c| / (||c||_V ||d||_V)`, defined as zero when either norm vanishes.
pub fn bounded_ratio(mats: &OperatorMatrices, energy: &DMatrix<f64>, c: &[Complex64], d: &[Complex64]) -> f64 {
    let nc = quad_real(energy, c, c).re.max(0.0).sqrt();
    let nd = quad_real(energy, d, d).re.max(0.0).sqrt();
    if nc == 0.0 || nd == 0.0 {
        return 0.0;
    }
    quad_real(&mats.a, c, d).norm() / (nc * nd)
}

/// Samples `|d^H A c| / (||c||_V ||d||_V)` over random pairs and compares the
/// maximum with [`explicit_bound`]. `subspace_value` is the exact supremum over
/// the span of the basis.
pub fn certify_bounded(mats: &OperatorMatrices, constants: &CoercivityConstants, trials: usize, seed: u64) -> Result<CertReport> {
    let energy = mats.stiffness() + &mats.m;
    let n = energy.nrows();
    let bound = explicit_bound(&mats.params, &mats.weight, constants);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for k in 0..trials {
        let c = random_state(&mut rng, n);
        let d = if k % 2 == 0 { c.clone() } else { random_state(&mut rng, n) };
        worst = worst.max(bounded_ratio(mats, &energy, &c, &d));
    }
    let chol = energy.clone().cholesky().ok_or_else(|| Error::Singular {
        context: "V energy matrix".into(),
        condition: f64::INFINITY,
    })?;
    let l = chol.l();
    let y = l
        .solve_lower_triangular(&mats.a)
        .ok_or_else(|| Error::Singular { context: "boundedness".into(), condition: f64::INFINITY })?;
    let z = l
        .solve_lower_triangular(&y.transpose())
        .ok_or_else(|| Error::Singular { context: "boundedness".into(), condition: f64::INFINITY })?;
    let sup = z.singular_values().iter().cloned().fold(0.0, f64::max);
    Ok(CertReport {
        name: "bounded".into(),
        trials,
        worst_slack: bound - worst,
        bound,
        subspace_value: sup,
        pass: worst <= bound * (1.0 + CERT_TOL),
    })
}

/// Magnitudes of the integration-by-parts boundary integrands at the edges
/// of the truncated domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryReport {
    /// Largest integrand at `x = +-X_max`.
    pub x_edge: f64,
    /// Largest integrand at the smallest `xi` node.
    pub xi_zero: f64,
    /// Largest integrand at `xi = Xi_max`.
    pub xi_edge: f64,
    /// All three below `1e-10`.
    pub pass: bool,
}

/// Bounds `|e_j d e_k xi m|` on the boundary of the truncated domain over all
/// basis pairs and derivative directions.
pub fn boundary_terms(basis: &TensorBasis, grid: &QuadratureGrid, w: &WeightParams) -> BoundaryReport {
    let maxabs = |v: &[f64]| v.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let xi_profile = |xi: f64| {
        let [l, dl, _] = basis.laguerre_derivs(xi);
        let value = maxabs(&l);
        (value, maxabs(&dl), xi.powf(w.beta) * (-w.mu * xi).exp())
    };
    let x_profile = |x: f64| {
        let [h, dh, _] = basis.hermite_derivs(x);
        (maxabs(&h), maxabs(&dh), (-w.gamma * x.abs()).exp())
    };
    let mut x_edge: f64 = 0.0;
    for xe in [-grid.x_max, grid.x_max] {
        let (hv, hd, wx) = x_profile(xe);
        for &xi in &grid.xi {
            let (lv, _, wxi) = xi_profile(xi);
            x_edge = x_edge.max(wx * wxi * hv * hd * lv * lv);
        }
    }
    let edge_xi = |xi: f64| {
        let (lv, ld, wxi) = xi_profile(xi);
        let mut worst: f64 = 0.0;
        for &x in &grid.x {
            let (hv, _, wx) = x_profile(x);
            worst = worst.max(wx * wxi * hv * hv * lv * ld);
        }
        worst
    };
    let xi_zero = edge_xi(grid.xi[0]);
    let xi_edge = edge_xi(grid.xi_max);
    let tol = 1e-10;
    BoundaryReport {
        x_edge,
        xi_zero,
        xi_edge,
        pass: x_edge < tol && xi_zero < tol && xi_edge < tol,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{validate, TransformedParams};

    fn reference() -> (TransformedParams, WeightParams, CoercivityConstants) {
        let t = TransformedParams::new(3.5, 0.6, 1.0, -0.5, 0.0).unwrap();
        let rep = validate(&t, 2.0);
        (t, rep.weight, rep.constants)
    }

    fn small_ops() -> OperatorMatrices {
        let (t, w, _) = reference();
        let basis = TensorBasis::with_scales(6, 6, 1.0, 8.0).unwrap();
        let grid = basis.grid(&w).unwrap();
        assemble(&basis, &grid, &t, &w).unwrap()
    }

    #[test]
    fn mass_symmetric_positive_definite() {
        let ops = small_ops();
        assert_eq!(&ops.m, &ops.m.transpose());
        let ev = ops.m.clone().symmetric_eigen().eigenvalues;
        assert!(ev.iter().all(|&v| v > 0.0));
        let s = ops.stiffness();
        assert_eq!(&s, &s.transpose());
        assert!(s.clone().symmetric_eigen().eigenvalues.iter().all(|&v| v > -1e-12));
        assert!(ops.a.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn zero_shift_reproduces_real_form() {
        let ops = small_ops();
        let a0 = assemble_shifted(&ops, &ShiftParams::new(0.0, 0.0)).unwrap();
        let diff = (&a0 - to_complex(&ops.a)).iter().map(|v| v.norm()).fold(0.0, f64::max);
        assert!(diff <= 1e-12);
    }

    #[test]
    fn shift_independent_of_y() {
        let ops = small_ops();
        let a = assemble_shifted(&ops, &ShiftParams::new(0.0, 0.07)).unwrap();
        let b = assemble_shifted(&ops, &ShiftParams::new(1.3, 0.07)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn opposite_shifts_are_conjugate() {
        let ops = small_ops();
        let a = assemble_shifted(&ops, &ShiftParams::new(0.0, 0.09)).unwrap();
        let b = assemble_shifted(&ops, &ShiftParams::new(0.0, -0.09)).unwrap();
        assert_eq!(a, b.map(|v| v.conj()));
    }

    #[test]
    fn shift_linearization_is_second_order() {
        let ops = small_ops();
        let tpl = ops.templates();
        let da = ops.shift_derivative(&tpl);
        let base = to_complex(&ops.a);
        let err = |om: f64| (ops.shifted_with(&tpl, &ShiftParams::new(0.0, om)) - &base - &da * Complex64::new(om, 0.0)).norm();
        let (e1, e2) = (err(1e-2), err(5e-3));
        let order = (e1 / e2).log2();
        assert!((order - 2.0).abs() < 0.1, "order {order}");
    }

    #[test]
    fn shift_admissibility() {
        assert!(ShiftParams::new(0.0, 0.5).check().is_err());
        assert!(ShiftParams::new(0.0, -0.49).check().is_ok());
        let s = ShiftParams {
            y: 0.0,
            omega: 0.1,
            omega_star: Complex64::new(0.4, 0.31),
        };
        assert!(matches!(s.check(), Err(Error::Inadmissible(_))));
        let ok = ShiftParams {
            omega_star: Complex64::new(0.3, 0.4),
            ..s
        };
        assert!(ok.check().is_ok());
    }

    #[test]
    fn zero_correlation_has_no_cross_block() {
        let w = WeightParams::new(2.0, 2.0, 3.5).unwrap();
        let t = TransformedParams::new(3.5, 0.6, 1.0, 0.0, 0.0).unwrap();
        let basis = TensorBasis::with_scales(4, 4, 1.0, 8.0).unwrap();
        let grid = basis.grid(&w).unwrap();
        let ops = assemble(&basis, &grid, &t, &w).unwrap();
        let f = &ops.factors;
        let h = 0.5 * t.sigma;
        let manual = kron(&f.dxx, &f.m1) * h
            + kron(&f.mx, &f.d1) * h
            + kron(&(&f.cx - &f.cxs * w.gamma), &f.m1) * h
            + kron(&f.mx, &f.c1) * (t.kappa_star - w.mu * h)
            + kron(&f.mx, &f.c0) * ops.drift_constant();
        assert!((&ops.a - manual).abs().max() < 1e-14);
    }

    #[test]
    fn garding_zero_state_and_unit_state() {
        let ops = small_ops();
        let (_, _, k) = reference();
        let rep = certify_garding(&ops, &k, 0, 1).unwrap();
        assert!(rep.pass);
        let c = vec![Complex64::new(0.0, 0.0); ops.m.nrows()];
        assert_eq!(quad_real(&ops.a, &c, &c), Complex64::new(0.0, 0.0));
        let mut e = c.clone();
        e[0] = Complex64::new(1.0, 0.0);
        let lhs = 2.0 * quad_real(&ops.a, &e, &e).re;
        let energy = ops.stiffness() + &ops.m;
        let rhs = ops.params.sigma * 0.5 * quad_real(&energy, &e, &e).re - k.c2_prime * ops.m[(0, 0)];
        assert!(lhs - rhs > 0.0);
    }

    #[test]
    fn bounded_ratio_zero_for_zero_state() {
        let ops = small_ops();
        let energy = ops.stiffness() + &ops.m;
        let z = vec![Complex64::new(0.0, 0.0); ops.m.nrows()];
        let mut c = z.clone();
        c[3] = Complex64::new(1.0, 0.0);
        assert_eq!(bounded_ratio(&ops, &energy, &z, &c), 0.0);
        assert_eq!(bounded_ratio(&ops, &energy, &c, &z), 0.0);
    }

    #[test]
    fn boundary_integrands_vanish() {
        let (t, w, _) = reference();
        let basis = TensorBasis::with_scales(8, 8, 1.0, 8.0).unwrap();
        let grid = basis.grid(&w).unwrap();
        let _ = t;
        let rep = boundary_terms(&basis, &grid, &w);
        assert!(rep.pass, "{rep:?}");
    }
}
