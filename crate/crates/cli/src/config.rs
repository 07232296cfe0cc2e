//! Run configuration read from JSON.

use std::path::{Path, PathBuf};

use heston_galerkin::basis::TensorBasis;
use heston_galerkin::evolution::{L3Form, PathParams, SolveConfig};
use heston_galerkin::operator::ShiftParams;
use heston_galerkin::oracle::{McConfig, OptionKind};
use heston_galerkin::params::{ModelParams, WeightParams, GAMMA_CALL_DEFAULT, GAMMA_PUT_DEFAULT};
use heston_galerkin::pricing::Method;
use heston_galerkin::quadspace::GridSpec;
use serde::{Deserialize, Serialize};

/// Everything one subcommand needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Raw Heston inputs.
    pub model: ModelParams,
    /// Overrides of the default weight exponents.
    #[serde(default)]
    pub weight: WeightOverrides,
    /// Basis orders and scales.
    #[serde(default)]
    pub basis: BasisConfig,
    /// Quadrature grid construction.
    #[serde(default)]
    pub grid: GridSpec,
    /// Time stepping; defaults to Crank-Nicolson with `dt = 2e-3` up to the maturity.
    #[serde(default)]
    pub solve: Option<SolveConfig>,
    /// Pricing inputs.
    #[serde(default)]
    pub pricing: PricingConfig,
    /// Complex shifts and paths.
    #[serde(default)]
    pub shift: ShiftConfig,
    /// Randomized certification settings.
    #[serde(default)]
    pub check: CheckConfig,
    /// Monte Carlo settings.
    #[serde(default)]
    pub oracle: OracleConfig,
    /// Directory receiving every artifact.
    pub output_dir: PathBuf,
}

/// Optional replacements for the default `gamma` and `beta`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightOverrides {
    /// Rate in `|x|`; defaults to 0.5 for puts and 2.5 for calls.
    pub gamma: Option<f64>,
    /// Power of `xi`; defaults to `min(2, beta_max)`.
    pub beta: Option<f64>,
}

/// Basis orders and scales.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisConfig {
    /// Largest Hermite order.
    pub m_max: usize,
    /// Largest Laguerre order.
    pub n_max: usize,
    /// Hermite scale; defaults to 0.5.
    #[serde(default)]
    pub x_scale: Option<f64>,
    /// Laguerre scale; defaults to `max(1, 6 mu)`.
    #[serde(default)]
    pub xi_scale: Option<f64>,
}

impl Default for BasisConfig {
    fn default() -> Self {
        Self {
            m_max: 16,
            n_max: 16,
            x_scale: None,
            xi_scale: None,
        }
    }
}

impl BasisConfig {
    /// Builds the basis for the given weight.
    pub fn build(&self, w: &WeightParams) -> heston_galerkin::Result<TensorBasis> {
        let xs = self.x_scale.unwrap_or(0.5);
        let ls = self.xi_scale.unwrap_or((6.0 * w.mu).max(1.0));
        TensorBasis::with_scales(self.m_max, self.n_max, xs, ls)
    }
}

/// Pipeline choice for the PDE price.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodChoice {
    /// Project the payoff and evolve it.
    Direct,
    /// Evolve the remainder against a Black-Scholes reference.
    #[default]
    Residual,
}

impl From<MethodChoice> for Method {
    fn from(m: MethodChoice) -> Self {
        match m {
            MethodChoice::Direct => Method::Direct,
            MethodChoice::Residual => Method::Residual,
        }
    }
}

/// Uniform node set `min + i (max - min) / (points - 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    /// First node.
    pub min: f64,
    /// Last node.
    pub max: f64,
    /// Node count, at least 1.
    pub points: usize,
}

impl Axis {
    /// The nodes.
    pub fn nodes(&self) -> Vec<f64> {
        if self.points <= 1 {
            return vec![self.min];
        }
        let h = (self.max - self.min) / (self.points - 1) as f64;
        (0..self.points).map(|i| self.min + h * i as f64).collect()
    }
}

/// Pricing inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PricingConfig {
    /// Option kind.
    pub option: OptionKind,
    /// Spot for the comparison row.
    pub s0: f64,
    /// Initial variance for the comparison row and the reference price.
    pub v0: f64,
    /// Pipeline.
    pub method: MethodChoice,
    /// Log-moneyness nodes of the surface.
    pub x: Axis,
    /// Variance nodes of the surface.
    pub v: Axis,
    /// Largest acceptable relative error against the closed form (exit 3 when exceeded).
    pub rel_tol: Option<f64>,
    /// Times to maturity of the completeness diagnostic.
    pub completeness_times: Vec<f64>,
    /// Zero-set fraction tolerated by the completeness diagnostic.
    pub zero_set_tol: f64,
}

impl Default for PricingConfig {
    fn default() -> Self {
        Self {
            option: OptionKind::Put,
            s0: 100.0,
            v0: 0.04,
            method: MethodChoice::Residual,
            x: Axis {
                min: -0.5,
                max: 0.5,
                points: 21,
            },
            v: Axis {
                min: 0.01,
                max: 0.16,
                points: 16,
            },
            rel_tol: None,
            completeness_times: vec![0.25, 0.5],
            zero_set_tol: 0.0,
        }
    }
}

/// Complex shifts and paths to solve along.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShiftConfig {
    /// Constant shifts.
    #[serde(default)]
    pub shifts: Vec<ShiftParams>,
    /// Complex paths.
    #[serde(default)]
    pub paths: Vec<PathParams>,
    /// Discretization of the second-order path operator.
    #[serde(default)]
    pub l3_form: L3Form,
}

/// Randomized certification settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckConfig {
    /// Random states per certification.
    pub trials: usize,
    /// Seed of the random states.
    pub seed: u64,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self { trials: 500, seed: 2024 }
    }
}

/// Monte Carlo settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    /// Sampling settings of the estimator.
    pub mc: McConfig,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            mc: McConfig::new(100_000, 20240601),
        }
    }
}

impl RunConfig {
    /// Default `gamma` for the configured option kind unless overridden.
    pub fn gamma(&self) -> f64 {
        self.weight.gamma.unwrap_or(match self.pricing.option {
            OptionKind::Call => GAMMA_CALL_DEFAULT,
            OptionKind::Put => GAMMA_PUT_DEFAULT,
        })
    }

    /// Configured time stepping, or Crank-Nicolson with `dt = 2e-3` to maturity.
    pub fn solve_config(&self) -> SolveConfig {
        self.solve.clone().unwrap_or_else(|| {
            let mut c = SolveConfig::implicit_euler(2e-3, self.model.maturity);
            c.theta_scheme = 0.5;
            c
        })
    }
}

/// Failure to read or parse a configuration file.
#[derive(Debug)]
pub struct ConfigError {
    /// JSON-pointer-style location, empty for the document root.
    pub pointer: String,
    /// What went wrong.
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.pointer.is_empty() {
            write!(f, "config: {}", self.message)
        } else {
            write!(f, "config at {}: {}", self.pointer, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

fn pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        out.push('/');
        match seg {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } => out.push_str(&key.replace('~', "~0").replace('/', "~1")),
            Segment::Enum { variant } => out.push_str(variant),
            Segment::Unknown => out.push('?'),
        }
    }
    out
}

/// Parses a configuration from JSON text.
pub fn parse(text: &str) -> Result<RunConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| ConfigError {
        pointer: pointer(e.path()),
        message: e.inner().to_string(),
    })
}

/// Reads and parses a configuration file.
pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
        pointer: String::new(),
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    parse(&text)
}
