//! Independent reference prices from full-truncation Monte Carlo and the
//! characteristic-function pricer, with Black-Scholes as the limit case.
//!
//! Both Heston oracles use the risk-neutral coefficients `kappa* = kappa + lambda`
//! and `theta* = kappa theta / kappa*`, matching the PDE.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::params::ModelParams;
use crate::pricing::Payoff;

/// Call or put.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptionKind {
    /// Right to buy at the strike.
    Call,
    /// Right to sell at the strike.
    Put,
}

fn std_normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

/// Undiscounted Black-Scholes value in the log-moneyness `x = ln(S/K)` at time
/// to maturity `t`, with variance `var` and `q_r = q - r`.
pub fn black_scholes_forward(kind: OptionKind, x: f64, t: f64, var: f64, q_r: f64, strike: f64) -> f64 {
    let y = x - q_r * t;
    let sd = (var * t).sqrt();
    if sd <= 0.0 {
        let f = y.exp();
        return strike
            * match kind {
                OptionKind::Call => (f - 1.0).max(0.0),
                OptionKind::Put => (1.0 - f).max(0.0),
            };
    }
    let d1 = (y + 0.5 * sd * sd) / sd;
    let d2 = d1 - sd;
    strike
        * match kind {
            OptionKind::Call => y.exp() * std_normal_cdf(d1) - std_normal_cdf(d2),
            OptionKind::Put => std_normal_cdf(-d2) - y.exp() * std_normal_cdf(-d1),
        }
}

/// Black-Scholes price with constant variance `var`.
pub fn black_scholes(kind: OptionKind, s0: f64, strike: f64, t: f64, r: f64, q: f64, var: f64) -> f64 {
    (-r * t).exp() * black_scholes_forward(kind, (s0 / strike).ln(), t, var, q - r, strike)
}

/// Monte Carlo settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    /// Number of simulated paths, counting both members of an antithetic pair.
    pub paths: usize,
    /// Time steps per path, `None` for `ceil(200 T)`.
    #[serde(default)]
    pub steps: Option<usize>,
    /// Seed of the per-path streams.
    pub seed: u64,
    /// Pair each path with its sign-flipped twin.
    #[serde(default)]
    pub antithetic: bool,
}

impl McConfig {
    /// Plain estimator with the default step count.
    pub fn new(paths: usize, seed: u64) -> Self {
        Self {
            paths,
            steps: None,
            seed,
            antithetic: false,
        }
    }

    fn resolved_steps(&self, maturity: f64) -> usize {
        self.steps.unwrap_or_else(|| ((200.0 * maturity).ceil() as usize).max(1))
    }
}

/// Monte Carlo estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    /// Discounted payoff mean.
    pub mean: f64,
    /// Sample standard deviation over `sqrt(N)`, with `N` independent samples.
    pub std_error: f64,
    /// Paths simulated.
    pub paths: usize,
}

fn check_oracle_inputs(m: &ModelParams, s0: f64, v0: f64) -> Result<()> {
    for (name, v) in [("s0", s0), ("v0", v0)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(invalid(name, format!("must be > 0, got {v}")));
        }
    }
    if !(m.sigma.is_finite() && m.sigma >= 0.0) {
        return Err(invalid("sigma", format!("must be >= 0, got {}", m.sigma)));
    }
    if !(m.rho.abs() <= 1.0) {
        return Err(invalid("rho", format!("must satisfy |rho| <= 1, got {}", m.rho)));
    }
    if !(m.kappa + m.lambda > 0.0 && m.theta > 0.0 && m.strike > 0.0 && m.maturity > 0.0) {
        return Err(invalid("model", "kappa*, theta, strike and maturity must be > 0"));
    }
    Ok(())
}

const CHUNK: usize = 2048;

/// Monte Carlo price with full-truncation Euler for the variance and
/// log-Euler for the price. Each path (or antithetic pair) draws from its own
/// ChaCha stream, so the result does not depend on thread scheduling.
pub fn mc_price(m: &ModelParams, s0: f64, v0: f64, payoff: &Payoff, cfg: &McConfig) -> Result<McEstimate> {
    check_oracle_inputs(m, s0, v0)?;
    if cfg.paths == 0 || cfg.steps == Some(0) {
        return Err(invalid("mc", "path and step counts must be > 0"));
    }
    let samples = if cfg.antithetic { cfg.paths.div_ceil(2) } else { cfg.paths };
    let n_steps = cfg.resolved_steps(m.maturity);
    let dt = m.maturity / n_steps as f64;
    let sq = dt.sqrt();
    let (kappa, theta) = (m.kappa_star(), m.theta_star());
    let rho_c = (1.0 - m.rho * m.rho).max(0.0).sqrt();
    let x0 = (s0 / m.strike).ln();
    let disc = (-m.r * m.maturity).exp();
    let drift = m.r - m.q;

    let run = |z: &[(f64, f64)], sign: f64| -> f64 {
        let (mut x, mut v) = (x0, v0);
        for &(z1, z2) in z {
            let vp = v.max(0.0);
            let sv = vp.sqrt();
            let dw = sign * sq * z1;
            let dz = sign * sq * (m.rho * z1 + rho_c * z2);
            x += (drift - 0.5 * vp) * dt + sv * dw;
            v += kappa * (theta - vp) * dt + m.sigma * sv * dz;
        }
        disc * payoff.eval(x)
    };

    let chunks: Vec<(f64, f64)> = (0..samples.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut z = vec![(0.0, 0.0); n_steps];
            let (mut s, mut s2) = (0.0, 0.0);
            for i in c * CHUNK..((c + 1) * CHUNK).min(samples) {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(i as u64);
                for zk in z.iter_mut() {
                    *zk = (StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
                }
                let y = if cfg.antithetic { 0.5 * (run(&z, 1.0) + run(&z, -1.0)) } else { run(&z, 1.0) };
                s += y;
                s2 += y * y;
            }
            (s, s2)
        })
        .collect();
    let (sum, sum2) = chunks.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let n = samples as f64;
    let mean = sum / n;
    let var = if samples > 1 { ((sum2 - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
    Ok(McEstimate {
        mean,
        std_error: (var / n).sqrt(),
        paths: if cfg.antithetic { 2 * samples } else { samples },
    })
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn kronrod(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for i in 0..7 {
        let (f1, f2) = (f(c - h * XGK[i]), f(c + h * XGK[i]));
        k += WGK[i] * (f1 + f2);
        if i % 2 == 1 {
            g += WG[i / 2] * (f1 + f2);
        }
    }
    (k * h, ((k - g) * h).abs())
}

fn adaptive(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: usize) -> Result<f64> {
    let (v, e) = kronrod(f, a, b);
    if e <= tol.max(1e-15 * v.abs()) {
        return Ok(v);
    }
    if depth == 0 {
        return Err(Error::Integration(format!("no convergence on [{a}, {b}], error estimate {e:e}")));
    }
    let c = 0.5 * (a + b);
    Ok(adaptive(f, a, c, 0.5 * tol, depth - 1)? + adaptive(f, c, b, 0.5 * tol, depth - 1)?)
}

/// `int_0^inf f` over doubling intervals, stopped once two consecutive
/// intervals contribute less than `tol`.
fn semi_infinite(f: impl Fn(f64) -> f64, tol: f64) -> Result<f64> {
    let (mut a, mut b) = (0.0, 1.0);
    let mut total = 0.0;
    let mut quiet = 0;
    while b <= 1e8 {
        let part = adaptive(&f, a, b, tol, 40)?;
        total += part;
        quiet = if part.abs() < tol { quiet + 1 } else { 0 };
        if quiet >= 2 && b >= 16.0 {
            return Ok(total);
        }
        a = b;
        b *= 2.0;
    }
    Err(Error::Integration(format!(
        "integrand tail has not decayed: integral over [{}, {}] is {:e}",
        a / 2.0,
        a,
        adaptive(&f, a / 2.0, a, tol, 40).unwrap_or(f64::NAN)
    )))
}

/// `P_j = 1/2 + (1/pi) int_0^inf Re[e^{-i phi ln K} f_j(phi) / (i phi)] dphi`
/// with the continuous-logarithm form of the characteristic function.
fn probability(j: usize, m: &ModelParams, s0: f64, v0: f64) -> Result<f64> {
    let (kappa, theta) = (m.kappa_star(), m.theta_star());
    let (sigma, rho, tau) = (m.sigma, m.rho, m.maturity);
    let (u, b) = if j == 1 { (0.5, kappa - rho * sigma) } else { (-0.5, kappa) };
    let a = kappa * theta;
    let x = s0.ln();
    let lk = m.strike.ln();
    let i = Complex64::i();
    let integrand = |phi: f64| -> f64 {
        let p = Complex64::new(phi, 0.0);
        let beta = b - rho * sigma * i * p;
        let d = (beta * beta - sigma * sigma * (2.0 * u * i * p - p * p)).sqrt();
        let g = (beta - d) / (beta + d);
        let e = (-d * tau).exp();
        let c = (m.r - m.q) * i * p * tau + a / (sigma * sigma) * ((beta - d) * tau - 2.0 * ((1.0 - g * e) / (1.0 - g)).ln());
        let dd = (beta - d) / (sigma * sigma) * (1.0 - e) / (1.0 - g * e);
        let f = (c + dd * v0 + i * p * x).exp();
        (((-i * p * lk).exp() * f) / (i * p)).re
    };
    let tail = |phi: f64| if phi == 0.0 { integrand(1e-12) } else { integrand(phi) };
    let integral = semi_infinite(tail, 1e-13)?;
    Ok(0.5 + integral / std::f64::consts::PI)
}

/// Heston price from the two-probability representation; puts by parity.
///
/// With `sigma = 0` the variance path is deterministic and the Black-Scholes
/// price with the path-averaged variance is returned.
pub fn closed_form_price(m: &ModelParams, s0: f64, v0: f64, kind: OptionKind) -> Result<f64> {
    check_oracle_inputs(m, s0, v0)?;
    let (t, k) = (m.maturity, m.strike);
    let forward_gap = s0 * (-m.q * t).exp() - k * (-m.r * t).exp();
    let call = if m.sigma == 0.0 {
        let ks = m.kappa_star();
        let th = m.theta_star();
        let avg = th + (v0 - th) * (1.0 - (-ks * t).exp()) / (ks * t);
        black_scholes(OptionKind::Call, s0, k, t, m.r, m.q, avg)
    } else {
        let p1 = probability(1, m, s0, v0)?;
        let p2 = probability(2, m, s0, v0)?;
        s0 * (-m.q * t).exp() * p1 - k * (-m.r * t).exp() * p2
    };
    Ok(match kind {
        OptionKind::Call => call,
        OptionKind::Put => call - forward_gap,
    })
}
