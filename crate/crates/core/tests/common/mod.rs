//! Shared fixtures for the integration tests and the acceptance gate.
#![allow(dead_code)]

use heston_galerkin::basis::TensorBasis;
use heston_galerkin::params::{transform, validate, CoercivityConstants, ModelParams, TransformedParams, WeightParams};
use heston_galerkin::quadspace::{standard_family, WeightedFunction};

/// Reduced parameter set with `sigma = 1`, `kappa* = 3.5`, `theta* = 0.6`, `rho = -0.5`.
pub fn reference() -> (TransformedParams, WeightParams, CoercivityConstants) {
    let t = TransformedParams::new(3.5, 0.6, 1.0, -0.5, 0.0).unwrap();
    let rep = validate(&t, 2.0);
    (t, rep.weight, rep.constants)
}

/// Weight `beta = 2, gamma = 2, mu = 2.5` of the worked inequality examples.
pub fn worked_weight() -> WeightParams {
    WeightParams::new(2.0, 2.0, 2.5).unwrap()
}

/// The at-the-money benchmark market with half a year to expiry.
pub fn benchmark() -> ModelParams {
    ModelParams {
        r: 0.0,
        q: 0.0,
        kappa: 2.0,
        theta: 0.04,
        sigma: 0.3,
        rho: -0.5,
        lambda: 0.0,
        strike: 100.0,
        maturity: 0.5,
    }
}

/// Reduced benchmark parameters and the default weight for the given `gamma`.
pub fn benchmark_weight(gamma: f64) -> (TransformedParams, WeightParams, CoercivityConstants) {
    let t = transform(&benchmark()).unwrap();
    let rep = validate(&t, gamma);
    assert!(rep.admissible, "{rep:?}");
    (t, rep.weight, rep.constants)
}

/// Basis with `x` scale 0.5 and `xi` scale `6 mu`, resolving the price at
/// the short variance scales of the benchmark.
pub fn pricing_basis(n: usize, w: &WeightParams) -> TensorBasis {
    TensorBasis::with_scales(n, n, 0.5, (6.0 * w.mu).max(1.0)).unwrap()
}

/// The shared twenty-function test family.
pub fn function_family() -> Vec<(String, WeightedFunction<'static>)> {
    standard_family()
}

/// `e^{-|x|} e^{-xi}` of the worked examples.
pub fn worked_function() -> WeightedFunction<'static> {
    function_family().swap_remove(0).1
}

/// Relative difference.
pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}
