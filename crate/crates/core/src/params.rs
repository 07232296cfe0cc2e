//! Model parameters, the reduction to the risk-neutral rescaled parameter
//! set, and the admissibility calculus for the weighted formulation.
//!
//! The raw Heston inputs are
//!
//! ```text
//! dX = -(q - r + V/2) dt + sqrt(V) dW
//! dV = (kappa (theta - V) - lambda V) dt + sigma sqrt(V) dZ,   d<W,Z> = rho dt
//! ```
//!
//! Absorbing the price of volatility risk gives `kappa* = kappa + lambda` and
//! `theta* = kappa theta / (kappa + lambda)`, and the variance is rescaled to
//! `xi = v / sigma`. The weighted space uses the weight
//! `xi^(beta-1) exp(-gamma |x| - mu xi)` with `mu = kappa*/sigma - gamma |rho|`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Raw Heston model inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Risk-free rate (1/year).
    pub r: f64,
    /// Dividend yield (1/year).
    pub q: f64,
    /// Mean-reversion rate of the variance (1/year).
    pub kappa: f64,
    /// Long-run variance.
    pub theta: f64,
    /// Volatility of volatility (1/sqrt(year)).
    pub sigma: f64,
    /// Correlation between the price and variance drivers.
    pub rho: f64,
    /// Price-of-volatility-risk coefficient (1/year).
    #[serde(default)]
    pub lambda: f64,
    /// Strike `K`.
    pub strike: f64,
    /// Maturity `T` in years.
    pub maturity: f64,
}

impl ModelParams {
    /// Checks every invariant and names the first one violated.
    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("r", self.r),
            ("q", self.q),
            ("kappa", self.kappa),
            ("theta", self.theta),
            ("sigma", self.sigma),
            ("rho", self.rho),
            ("lambda", self.lambda),
            ("strike", self.strike),
            ("maturity", self.maturity),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(invalid(name, format!("must be finite, got {v}")));
            }
        }
        if self.kappa <= 0.0 {
            return Err(invalid("kappa", format!("must be > 0, got {}", self.kappa)));
        }
        if self.theta <= 0.0 {
            return Err(invalid("theta", format!("must be > 0, got {}", self.theta)));
        }
        if self.sigma <= 0.0 {
            return Err(invalid("sigma", format!("must be > 0, got {}", self.sigma)));
        }
        if self.rho.abs() >= 1.0 {
            return Err(invalid("rho", format!("must satisfy |rho| < 1, got {}", self.rho)));
        }
        if self.lambda < 0.0 {
            return Err(invalid("lambda", format!("must be >= 0, got {}", self.lambda)));
        }
        if self.strike <= 0.0 {
            return Err(invalid("strike", format!("must be > 0, got {}", self.strike)));
        }
        if self.maturity <= 0.0 {
            return Err(invalid("maturity", format!("must be > 0, got {}", self.maturity)));
        }
        Ok(())
    }

    /// Mean-reversion rate after absorbing `lambda`.
    pub fn kappa_star(&self) -> f64 {
        self.kappa + self.lambda
    }

    /// Long-run variance after absorbing `lambda`.
    pub fn theta_star(&self) -> f64 {
        self.kappa * self.theta / (self.kappa + self.lambda)
    }
}

/// Reduced parameter set: `r` and `lambda` absorbed, variance rescaled by `sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformedParams {
    /// `kappa + lambda`.
    pub kappa_star: f64,
    /// `kappa theta / (kappa + lambda)`.
    pub theta_star: f64,
    /// `theta_star / sigma`, the long-run level of `xi = v / sigma`.
    pub theta_sigma: f64,
    /// `q - r`.
    pub q_r: f64,
    /// Volatility of volatility.
    pub sigma: f64,
    /// Correlation.
    pub rho: f64,
}

impl TransformedParams {
    /// Builds an already-reduced parameter set directly.
    pub fn new(kappa_star: f64, theta_star: f64, sigma: f64, rho: f64, q_r: f64) -> Result<Self> {
        if !(kappa_star > 0.0 && kappa_star.is_finite()) {
            return Err(invalid("kappa_star", format!("must be > 0, got {kappa_star}")));
        }
        if !(theta_star > 0.0 && theta_star.is_finite()) {
            return Err(invalid("theta_star", format!("must be > 0, got {theta_star}")));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(invalid("sigma", format!("must be > 0, got {sigma}")));
        }
        if !(rho.abs() < 1.0) {
            return Err(invalid("rho", format!("must satisfy |rho| < 1, got {rho}")));
        }
        if !q_r.is_finite() {
            return Err(invalid("q_r", format!("must be finite, got {q_r}")));
        }
        Ok(Self {
            kappa_star,
            theta_star,
            theta_sigma: theta_star / sigma,
            q_r,
            sigma,
            rho,
        })
    }

    /// The product `kappa* theta*`, equal to the raw `kappa theta`.
    pub fn kappa_theta(&self) -> f64 {
        self.kappa_star * self.theta_star
    }
}

/// Reduces raw inputs to the parameter set used by the weighted formulation.
///
/// `theta*` is computed as `kappa theta / kappa*` so that
/// `kappa* theta* = kappa theta` holds to rounding.
pub fn transform(m: &ModelParams) -> Result<TransformedParams> {
    m.validate()?;
    let kappa_star = m.kappa_star();
    let theta_star = m.theta_star();
    TransformedParams::new(kappa_star, theta_star, m.sigma, m.rho, m.q - m.r)
}

/// Exponents of the weight `xi^(beta-1) exp(-gamma |x| - mu xi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightParams {
    /// Power of `xi`, offset by one.
    pub beta: f64,
    /// Exponential rate in `|x|`.
    pub gamma: f64,
    /// Exponential rate in `xi`.
    pub mu: f64,
}

impl WeightParams {
    /// Builds a weight after checking positivity of all exponents.
    pub fn new(beta: f64, gamma: f64, mu: f64) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(invalid("beta", format!("must be > 0, got {beta}")));
        }
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(invalid("gamma", format!("must be > 0, got {gamma}")));
        }
        if !(mu.is_finite() && mu > 0.0) {
            return Err(invalid("mu", format!("must be > 0, got {mu}")));
        }
        Ok(Self { beta, gamma, mu })
    }
}

/// Explicit constants of the boundedness and Gårding estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoercivityConstants {
    /// Coefficient of `int |u|^2 xi w`.
    pub c1: f64,
    /// Coefficient of `||u||_H^2`.
    pub c2: f64,
    /// Coefficient of `int |u|^2 / xi w`.
    pub c3: f64,
    /// Lower bound for `c1` that no longer depends on the sign of `rho`.
    pub c1_prime: f64,
    /// `sigma (1 - |rho|) + |c2|`, the growth constant of the energy estimate.
    pub c2_prime: f64,
    /// Constant `M1` of the boundedness estimate.
    #[serde(rename = "M1")]
    pub m1: f64,
}

impl CoercivityConstants {
    /// Evaluates all constants for given reduced parameters and weight.
    pub fn compute(t: &TransformedParams, w: &WeightParams) -> Self {
        let (kappa, sigma, rho, q_r) = (t.kappa_star, t.sigma, t.rho, t.q_r);
        let th = t.theta_sigma;
        let WeightParams { beta, gamma, mu } = *w;
        let c1 = mu * kappa - 0.5 * sigma * (gamma * gamma + mu * mu) - sigma * gamma * (0.5 - mu * rho).abs();
        let c2 = beta * mu * sigma - kappa * (beta + mu * th) - gamma * (beta * rho * sigma + q_r).abs();
        let c3 = (beta - 1.0) / sigma * (t.kappa_theta() - 0.5 * beta * sigma * sigma);
        let c1_prime = mu * kappa - 0.5 * sigma * (gamma * gamma + mu * mu) - sigma * gamma * (0.5 + mu * rho.abs());
        let c2_prime = sigma * (1.0 - rho.abs()) + c2.abs();
        let m1 = 2.0
            * [
                0.5 * (1.0 + gamma) * sigma,
                (kappa - 0.5 * mu * sigma).abs() + gamma * rho * sigma,
                q_r.abs(),
                (0.5 * beta * sigma - kappa * th).abs(),
            ]
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max);
        Self {
            c1,
            c2,
            c3,
            c1_prime,
            c2_prime,
            m1,
        }
    }
}

/// Outcome of a single inequality check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    /// Short identifier of the condition.
    pub name: String,
    /// Signed slack; the sign convention is documented per condition.
    pub slack: f64,
    /// Whether the condition holds.
    pub pass: bool,
}

/// Pass/fail record of every admissibility condition together with the
/// derived weight and constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    /// `sigma^2/2 - kappa* theta*`; passes when strictly negative.
    pub feller: Condition,
    /// `kappa* - threshold`; passes when nonnegative.
    pub kappa_bound: Condition,
    /// The threshold `sigma (gamma |rho| + sqrt(gamma (1 + gamma)))`.
    pub kappa_threshold: f64,
    /// `mu`; passes when strictly positive.
    pub mu_positive: Condition,
    /// `beta - 1`; passes when `1 < beta <= beta_max`.
    pub beta_range: Condition,
    /// Upper bound `2 kappa* theta* / sigma^2` for `beta`.
    pub beta_max: f64,
    /// The chosen weight exponents.
    pub weight: WeightParams,
    /// Constants evaluated at the chosen weight.
    pub constants: CoercivityConstants,
    /// Conjunction of all conditions.
    pub admissible: bool,
}

/// Default `gamma` for call payoffs, which need `gamma > 2` to lie in `H`.
pub const GAMMA_CALL_DEFAULT: f64 = 2.5;
/// Default `gamma` for put payoffs.
pub const GAMMA_PUT_DEFAULT: f64 = 0.5;

/// Default `beta`: `min(2, 2 kappa* theta* / sigma^2)`.
pub fn default_beta(t: &TransformedParams) -> f64 {
    beta_max(t).min(2.0)
}

/// Upper bound `2 kappa* theta* / sigma^2` for `beta`.
pub fn beta_max(t: &TransformedParams) -> f64 {
    2.0 * t.kappa_theta() / (t.sigma * t.sigma)
}

/// The admissibility threshold `sigma (gamma |rho| + sqrt(gamma (1 + gamma)))` for `kappa*`.
pub fn kappa_threshold(t: &TransformedParams, gamma: f64) -> f64 {
    t.sigma * (gamma * t.rho.abs() + (gamma * (1.0 + gamma)).sqrt())
}

/// Certifies admissibility with the default `beta`.
pub fn validate(t: &TransformedParams, gamma: f64) -> AdmissibilityReport {
    validate_with_beta(t, gamma, None)
}

/// Certifies admissibility, optionally overriding `beta`.
///
/// Failures are reported in the returned record rather than as errors. All
/// comparisons are exact on doubles with zero tolerance.
pub fn validate_with_beta(t: &TransformedParams, gamma: f64, beta: Option<f64>) -> AdmissibilityReport {
    let sigma = t.sigma;
    let feller_slack = 0.5 * sigma * sigma - t.kappa_theta();
    let threshold = kappa_threshold(t, gamma);
    let mu = t.kappa_star / sigma - gamma * t.rho.abs();
    let bmax = beta_max(t);
    let beta = beta.unwrap_or_else(|| default_beta(t));
    let weight = WeightParams { beta, gamma, mu };
    let constants = CoercivityConstants::compute(t, &weight);

    let feller = Condition {
        name: "feller".into(),
        slack: feller_slack,
        pass: feller_slack < 0.0,
    };
    let kappa_bound = Condition {
        name: "kappa_bound".into(),
        slack: t.kappa_star - threshold,
        pass: gamma > 0.0 && t.kappa_star >= threshold,
    };
    let mu_positive = Condition {
        name: "mu_positive".into(),
        slack: mu,
        pass: mu > 0.0,
    };
    let beta_range = Condition {
        name: "beta_range".into(),
        slack: beta - 1.0,
        pass: beta > 1.0 && beta <= bmax,
    };
    let admissible = feller.pass && kappa_bound.pass && mu_positive.pass && beta_range.pass;
    AdmissibilityReport {
        feller,
        kappa_bound,
        kappa_threshold: threshold,
        mu_positive,
        beta_range,
        beta_max: bmax,
        weight,
        constants,
        admissible,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn reference() -> TransformedParams {
        TransformedParams::new(3.5, 0.6, 1.0, -0.5, 0.0).unwrap()
    }

    fn model(kappa: f64, lambda: f64, theta: f64) -> ModelParams {
        ModelParams {
            r: 0.0,
            q: 0.0,
            kappa,
            theta,
            sigma: 0.3,
            rho: -0.5,
            lambda,
            strike: 100.0,
            maturity: 0.5,
        }
    }

    #[test]
    fn transform_absorbs_lambda() {
        let t = transform(&model(2.0, 0.5, 0.5)).unwrap();
        assert_relative_eq!(t.kappa_star, 2.5, max_relative = 1e-15);
        assert_relative_eq!(t.theta_star, 0.4, max_relative = 1e-15);
        assert_relative_eq!(t.kappa_theta(), 1.0, max_relative = 1e-15);
    }

    #[test]
    fn transform_identity_without_lambda() {
        let t = transform(&model(2.0, 0.0, 0.04)).unwrap();
        assert_eq!(t.kappa_star, 2.0);
        assert_eq!(t.theta_star, 0.04);
    }

    #[test]
    fn transform_rate_difference() {
        let mut m = model(2.0, 0.0, 0.04);
        m.r = 0.03;
        m.q = 0.05;
        let t = transform(&m).unwrap();
        assert_relative_eq!(t.q_r, 0.02, max_relative = 1e-12);
    }

    #[test]
    fn transform_names_violated_invariant() {
        let mut m = model(2.0, 0.0, 0.04);
        m.rho = 1.0;
        match transform(&m) {
            Err(crate::Error::InvalidParameter { name, .. }) => assert_eq!(name, "rho"),
            other => panic!("unexpected {other:?}"),
        }
        let mut m = model(2.0, 0.0, 0.04);
        m.lambda = -0.1;
        assert!(matches!(
            transform(&m),
            Err(crate::Error::InvalidParameter { name: "lambda", .. })
        ));
    }

    #[test]
    fn reference_report() {
        let rep = validate(&reference(), 2.0);
        assert_relative_eq!(rep.feller.slack, -1.6, max_relative = 1e-14);
        assert!(rep.feller.pass);
        assert_relative_eq!(rep.kappa_threshold, 1.0 + 6f64.sqrt(), max_relative = 1e-14);
        assert!((rep.kappa_threshold - 3.4495).abs() < 1e-4);
        assert!(rep.kappa_bound.pass);
        assert_relative_eq!(rep.weight.mu, 2.5, max_relative = 1e-15);
        assert_relative_eq!(rep.beta_max, 4.2, max_relative = 1e-14);
        assert_eq!(rep.weight.beta, 2.0);
        assert!(rep.admissible);
    }

    #[test]
    fn feller_failure() {
        let t = TransformedParams::new(1.0, 0.4, 1.0, -0.5, 0.0).unwrap();
        let rep = validate(&t, 2.0);
        assert_relative_eq!(rep.feller.slack, 0.1, max_relative = 1e-12);
        assert!(!rep.feller.pass);
        assert!(!rep.admissible);
    }

    #[test]
    fn c1_prime_vanishes_on_boundary() {
        let t = TransformedParams::new(3.4495, 0.6, 1.0, -0.5, 0.0).unwrap();
        let rep = validate(&t, 2.0);
        assert!(rep.constants.c1_prime.abs() < 1e-3);
    }

    #[test]
    fn c1_prime_closed_form_at_optimal_mu() {
        let t = reference();
        let rep = validate(&t, 2.0);
        let s = t.sigma;
        let closed = 0.5 * s * ((t.kappa_star / s - 2.0 * t.rho.abs()).powi(2) - 2.0 * 3.0);
        assert_relative_eq!(rep.constants.c1_prime, closed, max_relative = 1e-12);
    }

    #[test]
    fn reference_constants() {
        let rep = validate(&reference(), 2.0);
        let c = rep.constants;
        assert_relative_eq!(c.c2, -9.25, max_relative = 1e-14);
        assert_relative_eq!(c.c2_prime, 9.75, max_relative = 1e-14);
        assert_relative_eq!(c.c3, 1.1, max_relative = 1e-14);
        assert_relative_eq!(c.c1_prime, 0.125, max_relative = 1e-12);
        assert!(c.c1 >= c.c1_prime);
        assert_relative_eq!(c.m1, 2.0 * 1.5, max_relative = 1e-14);
    }

    #[test]
    fn beta_override_checked() {
        let rep = validate_with_beta(&reference(), 2.0, Some(4.5));
        assert!(!rep.beta_range.pass);
        let rep = validate_with_beta(&reference(), 2.0, Some(1.0));
        assert!(!rep.beta_range.pass);
        let rep = validate_with_beta(&reference(), 2.0, Some(4.2));
        assert!(rep.beta_range.pass);
    }

    #[test]
    fn negative_mu_inadmissible() {
        let t = TransformedParams::new(0.5, 0.6, 1.0, -0.9, 0.0).unwrap();
        let rep = validate(&t, 2.0);
        assert!(!rep.mu_positive.pass);
        assert!(!rep.admissible);
    }

    #[test]
    fn report_serializes() {
        let rep = validate(&reference(), 2.0);
        let s = serde_json::to_string(&rep).unwrap();
        assert!(s.contains("\"M1\""));
        let back: AdmissibilityReport = serde_json::from_str(&s).unwrap();
        assert_eq!(back, rep);
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        fn arb_params() -> impl Strategy<Value = (TransformedParams, f64)> {
            (0.1f64..10.0, 0.01f64..1.0, 0.05f64..2.0, -0.95f64..0.95, -0.1f64..0.1, 0.1f64..3.0)
                .prop_map(|(k, th, s, rho, qr, g)| (TransformedParams::new(k, th, s, rho, qr).unwrap(), g))
        }

        proptest! {
            #[test]
            fn admissible_reports_have_signed_constants((t, g) in arb_params()) {
                let rep = validate(&t, g);
                if rep.admissible {
                    prop_assert!(rep.constants.c1_prime >= -1e-12 * t.kappa_star.max(1.0));
                    prop_assert!(rep.constants.c3 >= -1e-12 * t.kappa_theta());
                    prop_assert!(rep.constants.c2_prime > 0.0);
                    prop_assert!(rep.weight.mu > 0.0);
                    prop_assert!(rep.weight.beta > 1.0 && rep.weight.beta <= rep.beta_max);
                    prop_assert!(rep.constants.c1 >= rep.constants.c1_prime - 1e-12);
                }
            }

            #[test]
            fn monotone_in_kappa((t, g) in arb_params(), dk in 0.0f64..5.0) {
                let t2 = TransformedParams::new(t.kappa_star + dk, t.theta_star, t.sigma, t.rho, t.q_r).unwrap();
                let r1 = validate(&t, g);
                let r2 = validate(&t2, g);
                if r1.kappa_bound.pass {
                    prop_assert!(r2.kappa_bound.pass);
                }
                if r1.admissible {
                    prop_assert!(r2.admissible);
                }
            }

            #[test]
            fn transform_idempotent(k in 0.1f64..10.0, th in 0.01f64..1.0, s in 0.05f64..2.0, rho in -0.95f64..0.95) {
                let m = ModelParams { r: 0.01, q: 0.02, kappa: k, theta: th, sigma: s, rho, lambda: 0.0, strike: 1.0, maturity: 1.0 };
                let t = transform(&m).unwrap();
                let m2 = ModelParams { kappa: t.kappa_star, theta: t.theta_star, ..m };
                prop_assert_eq!(transform(&m2).unwrap(), t);
            }
        }
    }
}
