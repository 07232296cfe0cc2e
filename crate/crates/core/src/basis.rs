//! Hermite and Laguerre functions, the tensor basis `e_mn(x, xi) = h_m(x) l_n(xi)`,
//! coefficient vectors and least-squares projection in the weighted `H` product.
//!
//! With unit scales the families are
//!
//! ```text
//! h_m(x) = (sqrt(pi) 2^m m!)^(-1/2) H_m(x) exp(-x^2/2)
//! l_n(xi) = L_n(xi) exp(-xi/2)
//! ```
//!
//! both orthonormal in plain `L^2`. A basis may carry scales `s` and `a`, in
//! which case `h_m` is replaced by `s^(-1/2) h_m(x/s)` and `l_n` by
//! `a^(1/2) l_n(a xi)`. Orthonormality is preserved and only the spatial
//! resolution changes.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::params::WeightParams;
use crate::quadspace::{GridSpec, QuadratureGrid, WeightedFunction};

/// Largest condition number accepted for a Gram matrix.
pub const MAX_GRAM_CONDITION: f64 = 1e14;

/// Hermite x Laguerre tensor basis with orders `0..=m_max` and `0..=n_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorBasis {
    m_max: usize,
    n_max: usize,
    x_scale: f64,
    xi_scale: f64,
    #[serde(skip)]
    herm_a: Vec<f64>,
    #[serde(skip)]
    herm_b: Vec<f64>,
}

/// Values and derivatives up to second order of one basis family on a set of nodes.
///
/// Rows are orders, columns are nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyTable {
    /// Function values.
    pub value: DMatrix<f64>,
    /// First derivatives.
    pub d1: DMatrix<f64>,
    /// Second derivatives.
    pub d2: DMatrix<f64>,
}

/// Basis tables on the nodes of a quadrature grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisTables {
    /// Hermite family on the `x` nodes.
    pub x: FamilyTable,
    /// Laguerre family on the `xi` nodes.
    pub xi: FamilyTable,
}

impl TensorBasis {
    /// Unit-scale basis.
    pub fn new(m_max: usize, n_max: usize) -> Self {
        Self::with_scales(m_max, n_max, 1.0, 1.0).expect("unit scales are valid")
    }

    /// Basis with scale `s` in `x` and `a` in `xi`.
    pub fn with_scales(m_max: usize, n_max: usize, x_scale: f64, xi_scale: f64) -> Result<Self> {
        if !(x_scale.is_finite() && x_scale > 0.0) {
            return Err(invalid("x_scale", format!("must be > 0, got {x_scale}")));
        }
        if !(xi_scale.is_finite() && xi_scale > 0.0) {
            return Err(invalid("xi_scale", format!("must be > 0, got {xi_scale}")));
        }
        let herm_a = (0..=m_max + 1).map(|m| (2.0 / (m as f64 + 1.0)).sqrt()).collect();
        let herm_b = (0..=m_max + 1).map(|m| (m as f64 / (m as f64 + 1.0)).sqrt()).collect();
        Ok(Self {
            m_max,
            n_max,
            x_scale,
            xi_scale,
            herm_a,
            herm_b,
        })
    }

    /// Largest Hermite order.
    pub fn m_max(&self) -> usize {
        self.m_max
    }

    /// Largest Laguerre order.
    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// Scale of the Hermite family.
    pub fn x_scale(&self) -> f64 {
        self.x_scale
    }

    /// Scale of the Laguerre family.
    pub fn xi_scale(&self) -> f64 {
        self.xi_scale
    }

    /// Number of tensor functions.
    pub fn dim(&self) -> usize {
        (self.m_max + 1) * (self.n_max + 1)
    }

    /// Flat index `m (n_max + 1) + n` of `e_mn`.
    pub fn index(&self, m: usize, n: usize) -> Result<usize> {
        self.check_order(m, n)?;
        Ok(m * (self.n_max + 1) + n)
    }

    /// Orders `(m, n)` of the flat index `j`.
    pub fn order(&self, j: usize) -> (usize, usize) {
        (j / (self.n_max + 1), j % (self.n_max + 1))
    }

    fn check_order(&self, m: usize, n: usize) -> Result<()> {
        if m > self.m_max || n > self.n_max {
            return Err(Error::OrderOutOfRange {
                m,
                n,
                m_max: self.m_max,
                n_max: self.n_max,
            });
        }
        Ok(())
    }

    /// Grid specification that resolves every basis function.
    ///
    /// The `x` core covers the oscillatory region of `h_{m_max}` with panels
    /// no wider than two local wavelengths; the `xi` core does the same for
    /// `l_{n_max}` and is graded toward zero.
    pub fn grid_spec(&self) -> GridSpec {
        let s = self.x_scale;
        let turn = (2.0 * self.m_max as f64 + 1.0).sqrt();
        let x_core = s * (turn + 8.0);
        let wavelength = 2.0 * std::f64::consts::PI * s / turn;
        let x_panels = ((x_core / (2.0 * wavelength)).ceil() as usize).max(8);
        let nu = 4.0 * self.n_max as f64 + 2.0;
        let t_core = nu + 8.0 * nu.sqrt() + 20.0;
        let xi_core_panels = ((t_core / 4.0).ceil() as usize).max(4);
        GridSpec {
            x_panels,
            x_core: Some(x_core),
            xi_panels: 14,
            xi_core: Some(t_core / self.xi_scale),
            xi_core_panels,
            ..GridSpec::default()
        }
    }

    /// Grid resolving this basis under the weight `w`.
    pub fn grid(&self, w: &WeightParams) -> Result<QuadratureGrid> {
        QuadratureGrid::new(&self.grid_spec(), w)
    }

    fn hermite_unit<T>(&self, t: T, start: T) -> Vec<T>
    where
        T: Copy + std::ops::Mul<f64, Output = T> + std::ops::Mul<T, Output = T> + std::ops::Sub<T, Output = T>,
    {
        let mut out = Vec::with_capacity(self.m_max + 1);
        out.push(start);
        if self.m_max >= 1 {
            out.push(t * start * std::f64::consts::SQRT_2);
        }
        for m in 1..self.m_max {
            let next = t * out[m] * self.herm_a[m] - out[m - 1] * self.herm_b[m];
            out.push(next);
        }
        out
    }

    /// Hermite functions `h_0 .. h_{m_max}` at real `x`.
    pub fn hermite(&self, x: f64) -> Vec<f64> {
        let s = self.x_scale;
        let t = x / s;
        let h0 = std::f64::consts::PI.powf(-0.25) * (-0.5 * t * t).exp();
        let norm = s.powf(-0.5);
        self.hermite_unit(t, h0).into_iter().map(|v| v * norm).collect()
    }

    /// Hermite functions at complex `z`, the entire extension of [`Self::hermite`].
    pub fn hermite_complex(&self, z: Complex64) -> Vec<Complex64> {
        let s = self.x_scale;
        let t = z / s;
        let h0 = (-0.5 * t * t).exp() * std::f64::consts::PI.powf(-0.25);
        let norm = s.powf(-0.5);
        self.hermite_unit(t, h0).into_iter().map(|v| v * norm).collect()
    }

    /// Hermite values with first and second derivatives at real `x`.
    pub fn hermite_derivs(&self, x: f64) -> [Vec<f64>; 3] {
        let s = self.x_scale;
        let t = x / s;
        let h: Vec<f64> = self.hermite(x);
        let d1 = (0..=self.m_max)
            .map(|m| {
                let lower = if m == 0 { 0.0 } else { (2.0 * m as f64).sqrt() * h[m - 1] };
                (lower - t * h[m]) / s
            })
            .collect();
        let d2 = (0..=self.m_max)
            .map(|m| (t * t - (2.0 * m as f64 + 1.0)) * h[m] / (s * s))
            .collect();
        [h, d1, d2]
    }

    fn laguerre_unit<T>(&self, t: T, start: T) -> Vec<T>
    where
        T: Copy
            + std::ops::Mul<f64, Output = T>
            + std::ops::Mul<T, Output = T>
            + std::ops::Sub<T, Output = T>
            + std::ops::Add<f64, Output = T>
            + std::ops::Neg<Output = T>,
    {
        let mut out = Vec::with_capacity(self.n_max + 1);
        out.push(start);
        if self.n_max >= 1 {
            out.push((-t + 1.0) * start);
        }
        for n in 1..self.n_max {
            let nf = n as f64;
            let next = ((-t + (2.0 * nf + 1.0)) * out[n] - out[n - 1] * nf) * (1.0 / (nf + 1.0));
            out.push(next);
        }
        out
    }

    /// Laguerre functions `l_0 .. l_{n_max}` at real `xi`.
    pub fn laguerre(&self, xi: f64) -> Vec<f64> {
        let a = self.xi_scale;
        let t = a * xi;
        let norm = a.sqrt();
        self.laguerre_unit(t, (-0.5 * t).exp()).into_iter().map(|v| v * norm).collect()
    }

    /// Laguerre functions at complex `zeta`, the entire extension of [`Self::laguerre`].
    pub fn laguerre_complex(&self, zeta: Complex64) -> Vec<Complex64> {
        let a = self.xi_scale;
        let t = zeta * a;
        let norm = a.sqrt();
        self.laguerre_unit(t, (-0.5 * t).exp()).into_iter().map(|v| v * norm).collect()
    }

    /// Laguerre values with first and second derivatives at real `xi`.
    pub fn laguerre_derivs(&self, xi: f64) -> [Vec<f64>; 3] {
        let a = self.xi_scale;
        let l = self.laguerre(xi);
        let n1 = self.n_max + 1;
        let mut d1 = vec![0.0; n1];
        let mut d2 = vec![0.0; n1];
        let (mut s1, mut s2) = (0.0, 0.0);
        for n in 0..n1 {
            d1[n] = a * (-s1 - 0.5 * l[n]);
            d2[n] = a * a * (s1 + 0.25 * l[n] + s2);
            s2 += s1;
            s1 += l[n];
        }
        [l, d1, d2]
    }

    /// `e_mn(x, xi)`.
    pub fn eval_basis(&self, m: usize, n: usize, x: f64, xi: f64) -> Result<f64> {
        self.check_order(m, n)?;
        check_xi(xi)?;
        Ok(self.hermite(x)[m] * self.laguerre(xi)[n])
    }

    fn check_coeffs(&self, c: &CoefficientVector) -> Result<()> {
        if c.m_max != self.m_max || c.n_max != self.n_max {
            return Err(Error::Mismatch(format!(
                "coefficient orders ({}, {}) do not match basis ({}, {})",
                c.m_max, c.n_max, self.m_max, self.n_max
            )));
        }
        Ok(())
    }

    fn contract<T: Copy + Into<Complex64>, U: Copy + Into<Complex64>>(&self, c: &CoefficientVector, hx: &[T], lxi: &[U]) -> Complex64 {
        let n1 = self.n_max + 1;
        let mut total = Complex64::new(0.0, 0.0);
        for (m, hm) in hx.iter().enumerate() {
            let mut row = Complex64::new(0.0, 0.0);
            for (n, ln) in lxi.iter().enumerate() {
                row += c.values[m * n1 + n] * (*ln).into();
            }
            total += row * (*hm).into();
        }
        total
    }

    /// `sum c_mn e_mn(x, xi)` at real arguments.
    pub fn eval_sum(&self, c: &CoefficientVector, x: f64, xi: f64) -> Result<Complex64> {
        self.check_coeffs(c)?;
        check_xi(xi)?;
        Ok(self.contract(c, &self.hermite(x), &self.laguerre(xi)))
    }

    /// `sum c_mn h_m(z) l_n(zeta)` at complex arguments such as `z = x + iy`,
    /// `zeta = xi (1 + i omega)`.
    pub fn eval_sum_complex(&self, c: &CoefficientVector, z: Complex64, zeta: Complex64) -> Result<Complex64> {
        self.check_coeffs(c)?;
        Ok(self.contract(c, &self.hermite_complex(z), &self.laguerre_complex(zeta)))
    }

    /// `d/dx sum c_mn e_mn` at real arguments.
    pub fn eval_sum_dx(&self, c: &CoefficientVector, x: f64, xi: f64) -> Result<Complex64> {
        self.check_coeffs(c)?;
        check_xi(xi)?;
        Ok(self.contract(c, &self.hermite_derivs(x)[1], &self.laguerre(xi)))
    }

    /// `d/dxi sum c_mn e_mn` at real arguments.
    pub fn eval_sum_dxi(&self, c: &CoefficientVector, x: f64, xi: f64) -> Result<Complex64> {
        self.check_coeffs(c)?;
        check_xi(xi)?;
        Ok(self.contract(c, &self.hermite(x), &self.laguerre_derivs(xi)[1]))
    }

    /// The expansion `sum c_mn e_mn` as a function with analytic partials.
    pub fn to_function<'a>(&'a self, c: &'a CoefficientVector) -> Result<WeightedFunction<'a>> {
        self.check_coeffs(c)?;
        Ok(WeightedFunction::with_partials(
            move |x, xi| self.contract(c, &self.hermite(x), &self.laguerre(xi)),
            move |x, xi| self.contract(c, &self.hermite_derivs(x)[1], &self.laguerre(xi)),
            move |x, xi| self.contract(c, &self.hermite(x), &self.laguerre_derivs(xi)[1]),
        ))
    }

    /// Values and derivatives of both families on the grid nodes.
    pub fn tables(&self, grid: &QuadratureGrid) -> BasisTables {
        let x = family_table(self.m_max + 1, &grid.x, |x| self.hermite_derivs(x));
        let xi = family_table(self.n_max + 1, &grid.xi, |xi| self.laguerre_derivs(xi));
        BasisTables { x, xi }
    }

    /// Hermite values at the shifted nodes `x_i + i y`.
    pub fn hermite_table_complex(&self, grid: &QuadratureGrid, y: f64) -> DMatrix<Complex64> {
        let cols: Vec<Vec<Complex64>> = grid.x.iter().map(|&x| self.hermite_complex(Complex64::new(x, y))).collect();
        DMatrix::from_fn(self.m_max + 1, grid.x.len(), |m, i| cols[i][m])
    }

    /// Laguerre values at the rotated nodes `xi_k * factor`.
    pub fn laguerre_table_complex(&self, grid: &QuadratureGrid, factor: Complex64) -> DMatrix<Complex64> {
        let cols: Vec<Vec<Complex64>> = grid.xi.iter().map(|&xi| self.laguerre_complex(factor * xi)).collect();
        DMatrix::from_fn(self.n_max + 1, grid.xi.len(), |n, k| cols[k][n])
    }

    /// Largest deviation from the identity of the plain `L^2` Gram matrices of
    /// both families under the grid's Lebesgue weights.
    pub fn orthonormality_defect(&self, grid: &QuadratureGrid) -> f64 {
        let t = self.tables(grid);
        let gx = gram(&t.x.value, &grid.wx);
        let gxi = gram(&t.xi.value, &grid.wxi);
        let dev = |g: &DMatrix<f64>| {
            let mut worst: f64 = 0.0;
            for i in 0..g.nrows() {
                for j in 0..g.ncols() {
                    let target = if i == j { 1.0 } else { 0.0 };
                    worst = worst.max((g[(i, j)] - target).abs());
                }
            }
            worst
        };
        dev(&gx).max(dev(&gxi))
    }
}

fn check_xi(xi: f64) -> Result<()> {
    if !(xi >= 0.0) {
        return Err(Error::Domain(format!("real evaluation requires xi > 0, got {xi}")));
    }
    Ok(())
}

fn family_table(rows: usize, nodes: &[f64], f: impl Fn(f64) -> [Vec<f64>; 3]) -> FamilyTable {
    let mut value = DMatrix::zeros(rows, nodes.len());
    let mut d1 = DMatrix::zeros(rows, nodes.len());
    let mut d2 = DMatrix::zeros(rows, nodes.len());
    for (i, &p) in nodes.iter().enumerate() {
        let [v, a, b] = f(p);
        for r in 0..rows {
            value[(r, i)] = v[r];
            d1[(r, i)] = a[r];
            d2[(r, i)] = b[r];
        }
    }
    FamilyTable { value, d1, d2 }
}

/// `F diag(w) G^T`.
pub fn weighted_product(f: &DMatrix<f64>, w: &[f64], g: &DMatrix<f64>) -> DMatrix<f64> {
    let mut fw = f.clone();
    for (mut col, wi) in fw.column_iter_mut().zip(w) {
        col *= *wi;
    }
    fw * g.transpose()
}

/// Symmetrized `F diag(w) F^T`.
pub fn gram(f: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    let g = weighted_product(f, w, f);
    (&g + g.transpose()) * 0.5
}

/// Complex Galerkin state `c_mn`, stored with the flat index `m (n_max + 1) + n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientVector {
    /// Largest Hermite order.
    pub m_max: usize,
    /// Largest Laguerre order.
    pub n_max: usize,
    /// Coefficients in flat order.
    pub values: Vec<Complex64>,
}

impl CoefficientVector {
    /// All-zero state for a basis.
    pub fn zeros(basis: &TensorBasis) -> Self {
        Self {
            m_max: basis.m_max,
            n_max: basis.n_max,
            values: vec![Complex64::new(0.0, 0.0); basis.dim()],
        }
    }

    /// The unit vector of `e_mn`.
    pub fn unit(basis: &TensorBasis, m: usize, n: usize) -> Result<Self> {
        let mut c = Self::zeros(basis);
        c.values[basis.index(m, n)?] = Complex64::new(1.0, 0.0);
        Ok(c)
    }

    /// Wraps a flat vector; its length must match the basis.
    pub fn from_vector(basis: &TensorBasis, v: &DVector<Complex64>) -> Result<Self> {
        if v.len() != basis.dim() {
            return Err(Error::Mismatch(format!("vector length {} differs from basis size {}", v.len(), basis.dim())));
        }
        Ok(Self {
            m_max: basis.m_max,
            n_max: basis.n_max,
            values: v.iter().copied().collect(),
        })
    }

    /// Flat column vector.
    pub fn to_vector(&self) -> DVector<Complex64> {
        DVector::from_column_slice(&self.values)
    }

    /// Coefficient of `e_mn`.
    pub fn get(&self, m: usize, n: usize) -> Complex64 {
        self.values[m * (self.n_max + 1) + n]
    }

    /// Number of coefficients.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// Whether the vector has no coefficients.
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Entrywise complex conjugate.
    pub fn conj(&self) -> Self {
        Self {
            values: self.values.iter().map(|v| v.conj()).collect(),
            ..self.clone()
        }
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Writes rows `index, re, im` with a header.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["index", "re", "im"])?;
        for (j, v) in self.values.iter().enumerate() {
            wr.write_record([j.to_string(), format!("{:e}", v.re), format!("{:e}", v.im)])?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Reads the format of [`Self::write_csv`] for a given basis.
    pub fn read_csv<R: Read>(basis: &TensorBasis, r: R) -> Result<Self> {
        let mut c = Self::zeros(basis);
        let mut seen = vec![false; c.len()];
        let mut rd = csv::Reader::from_reader(r);
        for rec in rd.records() {
            let rec = rec?;
            let parse = |k: usize| -> Result<f64> {
                rec.get(k)
                    .ok_or_else(|| Error::Io(format!("missing column {k}")))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Io(e.to_string()))
            };
            let j = rec
                .get(0)
                .ok_or_else(|| Error::Io("missing index".into()))?
                .trim()
                .parse::<usize>()
                .map_err(|e| Error::Io(e.to_string()))?;
            if j >= c.len() {
                return Err(Error::Mismatch(format!("index {j} outside basis of size {}", c.len())));
            }
            c.values[j] = Complex64::new(parse(1)?, parse(2)?);
            seen[j] = true;
        }
        if let Some(j) = seen.iter().position(|s| !s) {
            return Err(Error::Io(format!("coefficient {j} missing")));
        }
        Ok(c)
    }
}

/// Result of an `H`-projection.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    /// Projected coefficients.
    pub coeffs: CoefficientVector,
    /// `||u0 - sum c e||_H`.
    pub residual: f64,
    /// `||u0||_H`.
    pub norm: f64,
    /// Condition estimate of the weighted Gram matrix.
    pub condition: f64,
}

/// Cholesky factors of the two separable Gram factors `Mx` and `M0`, whose
/// Kronecker product is the weighted Gram matrix of the tensor basis.
pub struct SeparableGram {
    chol_x: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    chol_xi: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    /// Condition estimate of the full Gram matrix.
    pub condition: f64,
}

fn spd_condition(m: &DMatrix<f64>) -> f64 {
    let ev = m.clone().symmetric_eigen().eigenvalues;
    let max = ev.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = ev.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

impl SeparableGram {
    /// Factors `Mx` and `M0`, refusing a numerically singular product.
    pub fn new(mx: &DMatrix<f64>, m0: &DMatrix<f64>) -> Result<Self> {
        let condition = spd_condition(mx) * spd_condition(m0);
        let singular = |what: &str| Error::Singular {
            context: format!("weighted Gram matrix ({what})"),
            condition,
        };
        if !(condition < MAX_GRAM_CONDITION) {
            return Err(singular("condition bound"));
        }
        let chol_x = mx.clone().cholesky().ok_or_else(|| singular("x factor"))?;
        let chol_xi = m0.clone().cholesky().ok_or_else(|| singular("xi factor"))?;
        Ok(Self { chol_x, chol_xi, condition })
    }

    /// Solves `(Mx (x) M0) c = b` with `b` reshaped to `(m_max+1) x (n_max+1)`.
    pub fn solve(&self, b: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let re = b.map(|v| v.re);
        let im = b.map(|v| v.im);
        let solve_re = |r: DMatrix<f64>| {
            let left = self.chol_x.solve(&r);
            self.chol_xi.solve(&left.transpose()).transpose()
        };
        let (sr, si) = (solve_re(re), solve_re(im));
        DMatrix::from_fn(b.nrows(), b.ncols(), |i, j| Complex64::new(sr[(i, j)], si[(i, j)]))
    }
}

/// Weighted least squares `min ||diag(sqrt w) (u - F^T c)||` for one basis
/// family, solved by a thin QR factorization of `diag(sqrt w) F^T`.
struct WeightedLeastSquares {
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    gram_condition: f64,
}

impl WeightedLeastSquares {
    fn new(f: &DMatrix<f64>, w: &[f64]) -> Result<Self> {
        let a = DMatrix::from_fn(f.ncols(), f.nrows(), |i, m| f[(m, i)] * w[i].sqrt());
        let qr = a.qr();
        let (q, r) = (qr.q(), qr.r());
        let sv = r.singular_values();
        let max = sv.iter().cloned().fold(0.0, f64::max);
        let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
        let gram_condition = if min > 0.0 { (max / min).powi(2) } else { f64::INFINITY };
        Ok(Self { q, r, gram_condition })
    }

    /// `R^{-1} Q^T u`, column by column.
    fn apply(&self, u: &DMatrix<f64>) -> DMatrix<f64> {
        let rhs = self.q.transpose() * u;
        self.r
            .solve_upper_triangular(&rhs)
            .unwrap_or_else(|| DMatrix::from_element(rhs.nrows(), rhs.ncols(), f64::NAN))
    }
}

impl TensorBasis {
    /// Weighted Gram factors `Mx = H diag(w1) H^T` and `M0 = L diag(w2) L^T`.
    pub fn gram_factors(&self, tables: &BasisTables, grid: &QuadratureGrid, w: &WeightParams) -> (DMatrix<f64>, DMatrix<f64>) {
        let w1 = grid.x_weights(w.gamma);
        let w2 = grid.xi_weights(w.beta, w.mu);
        (gram(&tables.x.value, &w1), gram(&tables.xi.value, &w2))
    }

    /// Reconstructs `sum c e` on every grid node as an `nx x nxi` matrix.
    pub fn reconstruct(&self, c: &CoefficientVector, tables: &BasisTables) -> Result<DMatrix<Complex64>> {
        self.check_coeffs(c)?;
        let cm = DMatrix::from_fn(self.m_max + 1, self.n_max + 1, |m, n| c.get(m, n));
        let hx = tables.x.value.map(|v| Complex64::new(v, 0.0));
        let lxi = tables.xi.value.map(|v| Complex64::new(v, 0.0));
        Ok(hx.transpose() * cm * lxi)
    }

    /// Least-squares `H`-projection of values sampled on the grid nodes.
    pub fn project_samples(&self, samples: &DMatrix<Complex64>, grid: &QuadratureGrid, w: &WeightParams) -> Result<Projection> {
        let (nx, nxi) = grid.shape();
        if samples.nrows() != nx || samples.ncols() != nxi {
            return Err(Error::Mismatch(format!(
                "samples are {}x{}, grid is {nx}x{nxi}",
                samples.nrows(),
                samples.ncols()
            )));
        }
        if samples.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Domain("initial data is not finite on the grid".into()));
        }
        let tables = self.tables(grid);
        let w1 = grid.x_weights(w.gamma);
        let w2 = grid.xi_weights(w.beta, w.mu);
        let lsq_x = WeightedLeastSquares::new(&tables.x.value, &w1)?;
        let lsq_xi = WeightedLeastSquares::new(&tables.xi.value, &w2)?;
        let condition = lsq_x.gram_condition * lsq_xi.gram_condition;
        if !(condition < MAX_GRAM_CONDITION) {
            return Err(Error::Singular {
                context: "weighted Gram matrix (condition bound)".into(),
                condition,
            });
        }
        let solve = |u: DMatrix<f64>| {
            let scaled = DMatrix::from_fn(nx, nxi, |i, k| u[(i, k)] * w1[i].sqrt() * w2[k].sqrt());
            let left = lsq_x.apply(&scaled);
            lsq_xi.apply(&left.transpose()).transpose()
        };
        let cr = solve(samples.map(|v| v.re));
        let ci = solve(samples.map(|v| v.im));
        let cm = DMatrix::from_fn(cr.nrows(), cr.ncols(), |i, j| Complex64::new(cr[(i, j)], ci[(i, j)]));
        let coeffs = CoefficientVector {
            m_max: self.m_max,
            n_max: self.n_max,
            values: (0..self.dim()).map(|j| cm[self.order(j)]).collect(),
        };
        let rec = self.reconstruct(&coeffs, &tables)?;
        let mut res = 0.0;
        let mut norm = 0.0;
        for i in 0..nx {
            for k in 0..nxi {
                let wk = w1[i] * w2[k];
                res += (samples[(i, k)] - rec[(i, k)]).norm_sqr() * wk;
                norm += samples[(i, k)].norm_sqr() * wk;
            }
        }
        Ok(Projection {
            coeffs,
            residual: res.sqrt(),
            norm: norm.sqrt(),
            condition,
        })
    }
}

/// Least-squares projection of `u0` onto the span of the basis in the `H` product.
///
/// Solves `G c = b` with `G_jk = (e_k, e_j)_H` and `b_j = (u0, e_j)_H`.
pub fn project(u0: &WeightedFunction<'_>, basis: &TensorBasis, grid: &QuadratureGrid, w: &WeightParams) -> Result<Projection> {
    let (nx, nxi) = grid.shape();
    let mut samples = DMatrix::zeros(nx, nxi);
    for (i, &x) in grid.x.iter().enumerate() {
        for (k, &xi) in grid.xi.iter().enumerate() {
            samples[(i, k)] = u0.eval(x, xi);
        }
    }
    basis.project_samples(&samples, grid, w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn put_weight() -> WeightParams {
        WeightParams::new(2.0, 0.5, 2.5).unwrap()
    }

    #[test]
    fn known_values() {
        let b = TensorBasis::new(3, 3);
        assert_relative_eq!(b.eval_basis(0, 0, 0.0, 0.0).unwrap(), std::f64::consts::PI.powf(-0.25), max_relative = 1e-15);
        assert!((std::f64::consts::PI.powf(-0.25) - 0.751126).abs() < 1e-6);
        assert!(b.laguerre(1.0)[1].abs() < 1e-16);
        let h = b.hermite(0.7);
        let n3 = (std::f64::consts::PI.sqrt() * 8.0 * 6.0).powf(-0.5);
        let h3 = n3 * (8.0 * 0.343 - 12.0 * 0.7) * (-0.245f64).exp();
        assert_relative_eq!(h[3], h3, max_relative = 1e-13);
        let l = b.laguerre(2.0);
        let l3 = (1.0 - 3.0 * 2.0 + 1.5 * 4.0 - 8.0 / 6.0) * (-1.0f64).exp();
        assert_relative_eq!(l[3], l3, max_relative = 1e-13);
    }

    #[test]
    fn order_out_of_range() {
        let b = TensorBasis::new(2, 3);
        assert!(matches!(b.eval_basis(3, 0, 0.0, 1.0), Err(Error::OrderOutOfRange { m: 3, .. })));
        assert!(b.index(0, 4).is_err());
        assert!(b.eval_basis(0, 0, 0.0, -1.0).is_err());
    }

    #[test]
    fn index_map_bijective() {
        let b = TensorBasis::new(4, 6);
        for j in 0..b.dim() {
            let (m, n) = b.order(j);
            assert_eq!(b.index(m, n).unwrap(), j);
        }
    }

    #[test]
    fn orthonormal_under_quadrature() {
        let w = put_weight();
        for b in [TensorBasis::new(12, 12), TensorBasis::with_scales(32, 48, 0.5, 40.0).unwrap()] {
            let g = b.grid(&w).unwrap();
            let d = b.orthonormality_defect(&g);
            assert!(d < 1e-10, "defect {d}");
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let b = TensorBasis::with_scales(8, 8, 0.7, 3.0).unwrap();
        let h = 1e-5;
        for &p in &[-1.3, 0.2, 2.1] {
            let [_, d1, d2] = b.hermite_derivs(p);
            let (hp, hm, h0) = (b.hermite(p + h), b.hermite(p - h), b.hermite(p));
            for m in 0..=8 {
                assert!((d1[m] - (hp[m] - hm[m]) / (2.0 * h)).abs() < 1e-7);
                assert!((d2[m] - (hp[m] - 2.0 * h0[m] + hm[m]) / (h * h)).abs() < 1e-4);
            }
        }
        for &p in &[0.05, 0.4, 2.5] {
            let [_, d1, d2] = b.laguerre_derivs(p);
            let (lp, lm, l0) = (b.laguerre(p + h), b.laguerre(p - h), b.laguerre(p));
            for n in 0..=8 {
                assert!((d1[n] - (lp[n] - lm[n]) / (2.0 * h)).abs() < 1e-6, "n={n}");
                assert!((d2[n] - (lp[n] - 2.0 * l0[n] + lm[n]) / (h * h)).abs() < 1e-3, "n={n}");
            }
        }
    }

    #[test]
    fn complex_evaluation_extends_real() {
        let b = TensorBasis::new(5, 5);
        let mut c = CoefficientVector::zeros(&b);
        for (j, v) in c.values.iter_mut().enumerate() {
            *v = Complex64::new(1.0 / (1.0 + j as f64), 0.3 * j as f64);
        }
        let real = b.eval_sum(&c, 0.4, 1.7).unwrap();
        let cplx = b.eval_sum_complex(&c, Complex64::new(0.4, 0.0), Complex64::new(1.7, 0.0)).unwrap();
        assert!((real - cplx).norm() < 1e-14);
    }

    #[test]
    fn project_unit_and_zero() {
        let w = put_weight();
        let b = TensorBasis::new(6, 6);
        let g = b.grid(&w).unwrap();
        let f = WeightedFunction::real(|x, xi| b.eval_basis(0, 0, x, xi).unwrap());
        let p = project(&f, &b, &g, &w).unwrap();
        assert!((p.coeffs.values[0] - Complex64::new(1.0, 0.0)).norm() < 1e-10);
        assert!(p.coeffs.values[1..].iter().all(|v| v.norm() < 1e-10));
        let zero = WeightedFunction::real(|_, _| 0.0);
        let p0 = project(&zero, &b, &g, &w).unwrap();
        assert!(p0.coeffs.values.iter().all(|v| *v == Complex64::new(0.0, 0.0)));
        assert_eq!(p0.residual, 0.0);
    }

    #[test]
    fn singular_gram_reported() {
        let w = WeightParams::new(2.0, 0.5, 6.4).unwrap();
        let b = TensorBasis::new(40, 40);
        let g = b.grid(&w).unwrap();
        let one = WeightedFunction::real(|_, _| 1.0);
        match project(&one, &b, &g, &w) {
            Err(Error::Singular { condition, .. }) => assert!(condition > MAX_GRAM_CONDITION),
            other => panic!("expected singular error, got {other:?}"),
        }
    }

    #[test]
    fn coefficient_csv_roundtrip() {
        let b = TensorBasis::new(2, 3);
        let mut c = CoefficientVector::zeros(&b);
        for (j, v) in c.values.iter_mut().enumerate() {
            *v = Complex64::new(j as f64 * 0.1 + 1e-17, -(j as f64).sqrt());
        }
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let back = CoefficientVector::read_csv(&b, buf.as_slice()).unwrap();
        assert_eq!(back, c);
        assert!(CoefficientVector::read_csv(&TensorBasis::new(1, 1), buf.as_slice()).is_err());
    }

    #[test]
    fn eval_sum_rejects_mismatched_state() {
        let b = TensorBasis::new(2, 2);
        let c = CoefficientVector::zeros(&TensorBasis::new(3, 2));
        assert!(matches!(b.eval_sum(&c, 0.0, 1.0), Err(Error::Mismatch(_))));
    }

    #[test]
    fn decay_bound_on_complex_rays() {
        let b = TensorBasis::new(6, 6);
        let mut c = CoefficientVector::zeros(&b);
        for (j, v) in c.values.iter_mut().enumerate() {
            *v = Complex64::new((j as f64).cos(), (j as f64 * 0.7).sin());
        }
        let (r, vartheta) = (0.5, 0.4f64);
        let ratio = |x: f64, y: f64, xi: f64, om: f64| {
            let v = b.eval_sum_complex(&c, Complex64::new(x, y), Complex64::new(xi, xi * om)).unwrap();
            v.norm() / (-(x * x + xi) / 4.0).exp()
        };
        let mut a: f64 = 0.0;
        for i in 0..=40 {
            for k in 1..=40 {
                for &(y, om) in &[(0.0, 0.0), (r, vartheta.tan()), (-r, -vartheta.tan())] {
                    a = a.max(ratio(-10.0 + 0.5 * i as f64, y, k as f64, om));
                }
            }
        }
        assert!(a.is_finite() && a > 0.0);
        for &(x, xi) in &[(14.0, 1.0), (-16.0, 3.0), (0.5, 120.0), (18.0, 150.0)] {
            assert!(ratio(x, r, xi, vartheta.tan()) <= a);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn projection_is_h_contraction(a in -2.0f64..2.0, b2 in 0.2f64..3.0, c in -1.0f64..1.0) {
            let w = put_weight();
            let basis = TensorBasis::new(6, 6);
            let g = basis.grid(&w).unwrap();
            let f = WeightedFunction::real(move |x, xi| (a * x).cos() * (-b2 * xi).exp() * (1.0 + c * x) * (-0.5 * x * x).exp());
            let p = project(&f, &basis, &g, &w).unwrap();
            let tables = basis.tables(&g);
            let rec = basis.reconstruct(&p.coeffs, &tables).unwrap();
            let (w1, w2) = (g.x_weights(w.gamma), g.xi_weights(w.beta, w.mu));
            let mut proj_norm = 0.0;
            for i in 0..w1.len() {
                for k in 0..w2.len() {
                    proj_norm += rec[(i, k)].norm_sqr() * w1[i] * w2[k];
                }
            }
            prop_assert!(proj_norm.sqrt() <= p.norm * (1.0 + 1e-9));
            prop_assert!((proj_norm + p.residual * p.residual - p.norm * p.norm).abs() <= 1e-8 * p.norm * p.norm);
        }

        #[test]
        fn tensor_pairs_orthonormal(m in 0usize..=12, n in 0usize..=12, m2 in 0usize..=12, n2 in 0usize..=12) {
            let basis = TensorBasis::new(12, 12);
            let w = put_weight();
            let g = basis.grid(&w).unwrap();
            let t = basis.tables(&g);
            let hx: f64 = (0..g.x.len()).map(|i| t.x.value[(m, i)] * t.x.value[(m2, i)] * g.wx[i]).sum();
            let lx: f64 = (0..g.xi.len()).map(|k| t.xi.value[(n, k)] * t.xi.value[(n2, k)] * g.wxi[k]).sum();
            let target = if m == m2 && n == n2 { 1.0 } else { 0.0 };
            prop_assert!((hx * lx - target).abs() < 1e-9);
        }
    }
}
