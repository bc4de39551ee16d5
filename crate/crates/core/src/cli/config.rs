//! JSON run configuration.
//!
//! ```json
//! {
//!   "params": {"a0": 2.2},
//!   "problem": {
//!     "a": "-a0", "b": "sin(2*pi*t)",
//!     "grid": {"type": "uniform", "t0": 0, "h": 1, "alpha": 0},
//!     "impulse": {"type": "multiplier", "value": -100},
//!     "tau": 0, "z0": 1, "horizon": 200
//!   },
//!   "analysis": {"window": [8, 64], "strictness_tol": 1e-9},
//!   "output": {"dir": "out", "samples_per_interval": 64}
//! }
//! ```

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::Deserialize;

use super::CliError;
use crate::expr::ScalarExpr;
use crate::grid::ArgumentGrid;
use crate::oscillation::{Window, DEFAULT_BURN_IN, DEFAULT_STRICTNESS_TOL, DEFAULT_WIDTH};
use crate::problem::{ImpulseRule, Problem};
use crate::quad::QuadConfig;

/// Environment variable overriding `analysis.quad.rel_tol`.
pub const QUAD_TOL_ENV: &str = "IDEPCAG_QUAD_TOL";

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    pub problem: ProblemSpec,
    #[serde(default)]
    pub analysis: AnalysisSpec,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub oracle: OracleSpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub a: String,
    pub b: String,
    pub grid: ArgumentGrid,
    #[serde(default)]
    pub impulse: ImpulseSpec,
    #[serde(default)]
    pub tau: f64,
    pub z0: f64,
    pub horizon: f64,
    /// Lagged grids: `z(t_{k(τ)-m}), ..., z(t_{k(τ)-1})`, optionally followed by `z0`.
    #[serde(default)]
    pub history: Vec<f64>,
}

/// A number, or a constant expression over the named parameters.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Number(f64),
    Text(String),
}

impl Value {
    fn resolve(&self, params: &BTreeMap<String, f64>) -> Result<f64, CliError> {
        match self {
            Value::Number(v) => Ok(*v),
            Value::Text(text) => ScalarExpr::parse_with(text, params)
                .map_err(|e| CliError::Config(format!("`{text}`: {e}")))?
                .as_constant()
                .ok_or_else(|| CliError::Config(format!("`{text}` must not depend on t or k"))),
        }
    }

    fn text(&self) -> Option<&str> {
        match self {
            Value::Text(t) => Some(t),
            Value::Number(_) => None,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum ImpulseSpec {
    #[default]
    None,
    /// `c_k = c`.
    Constant { c: Value },
    /// `z(t_k) = value · z(t_k⁻)`.
    Multiplier { value: Value },
    /// `c_k = (-1)^k c`.
    Alternating { c: Value },
    /// `c_k = values[k - first]`.
    Explicit {
        #[serde(default = "default_first")]
        first: i64,
        values: Vec<Value>,
    },
    /// `c_k` as an expression in `k`.
    Expression { expr: String },
}

fn default_first() -> i64 {
    1
}

impl ImpulseSpec {
    fn build(&self, params: &BTreeMap<String, f64>) -> Result<ImpulseRule, CliError> {
        Ok(match self {
            ImpulseSpec::None => ImpulseRule::None,
            ImpulseSpec::Constant { c } => ImpulseRule::Constant(c.resolve(params)?),
            ImpulseSpec::Multiplier { value } => ImpulseRule::Multiplier(value.resolve(params)?),
            ImpulseSpec::Alternating { c } => ImpulseRule::Alternating(c.resolve(params)?),
            ImpulseSpec::Explicit { first, values } => ImpulseRule::Explicit {
                first: *first,
                values: values.iter().map(|v| v.resolve(params)).collect::<Result<_, _>>()?,
            },
            ImpulseSpec::Expression { expr } => ImpulseRule::Expression(parse(expr, params)?),
        })
    }

    fn texts(&self) -> Vec<&str> {
        match self {
            ImpulseSpec::None => Vec::new(),
            ImpulseSpec::Constant { c } | ImpulseSpec::Alternating { c } => c.text().into_iter().collect(),
            ImpulseSpec::Multiplier { value } => value.text().into_iter().collect(),
            ImpulseSpec::Explicit { values, .. } => values.iter().filter_map(Value::text).collect(),
            ImpulseSpec::Expression { expr } => vec![expr],
        }
    }
}

fn parse(text: &str, params: &BTreeMap<String, f64>) -> Result<ScalarExpr, CliError> {
    ScalarExpr::parse_with(text, params).map_err(|e| CliError::Config(format!("`{text}`: {e}")))
}

impl ProblemSpec {
    pub fn build(&self, params: &BTreeMap<String, f64>, quad: QuadConfig) -> Result<Problem, CliError> {
        let problem = Problem::new(
            parse(&self.a, params)?,
            parse(&self.b, params)?,
            self.grid.clone(),
            self.tau,
            self.z0,
            self.horizon,
        )
        .with_impulses(self.impulse.build(params)?)
        .with_history(self.history.clone())
        .with_quad(quad);
        problem.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(problem)
    }

    /// Whether `name` occurs in `a`, `b` or the impulse rule.
    pub fn mentions(&self, name: &str) -> Result<bool, CliError> {
        for text in [self.a.as_str(), self.b.as_str()].into_iter().chain(self.impulse.texts()) {
            let names = ScalarExpr::parameter_names(text).map_err(|e| CliError::Config(format!("`{text}`: {e}")))?;
            if names.contains(name) {
                return Ok(true);
            }
        }
        Ok(false)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSpec {
    /// `[burn_in, width]`.
    pub window: [usize; 2],
    pub strictness_tol: f64,
    pub quad: QuadConfig,
}

impl Default for AnalysisSpec {
    fn default() -> Self {
        Self { window: [DEFAULT_BURN_IN, DEFAULT_WIDTH], strictness_tol: DEFAULT_STRICTNESS_TOL, quad: QuadConfig::default() }
    }
}

impl AnalysisSpec {
    pub fn window(&self) -> Window {
        Window::new(self.window[0], self.window[1])
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    pub dir: PathBuf,
    pub samples_per_interval: usize,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { dir: PathBuf::from("out"), samples_per_interval: 64 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    SupIPlus,
    InfIPlus,
    SupIMinus,
    InfIMinus,
}

impl Quantity {
    pub fn as_str(self) -> &'static str {
        match self {
            Quantity::SupIPlus => "sup_i_plus",
            Quantity::InfIPlus => "inf_i_plus",
            Quantity::SupIMinus => "sup_i_minus",
            Quantity::InfIMinus => "inf_i_minus",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: String,
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
    #[serde(default)]
    pub root: Option<RootSpec>,
}

/// Bisection target: the parameter value where `quantity` crosses `threshold`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RootSpec {
    pub quantity: Quantity,
    pub threshold: f64,
    /// Bracket width at which bisection stops.
    #[serde(default = "default_root_tol")]
    pub tol: f64,
}

fn default_root_tol() -> f64 {
    1e-9
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleSpec {
    pub steps_per_interval: usize,
    pub samples: usize,
    pub tolerance: f64,
}

impl Default for OracleSpec {
    fn default() -> Self {
        Self { steps_per_interval: 10_000, samples: 100, tolerance: 1e-6 }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<(), CliError> {
        if let Some(sweep) = &self.sweep {
            if sweep.steps < 2 {
                return Err(CliError::Config(format!("sweep needs at least 2 steps, got {}", sweep.steps)));
            }
            if !(sweep.lo < sweep.hi) {
                return Err(CliError::Config(format!("sweep needs lo < hi, got [{}, {}]", sweep.lo, sweep.hi)));
            }
        }
        if !(self.analysis.strictness_tol >= 0.0) {
            return Err(CliError::Config("strictness_tol must be nonnegative".into()));
        }
        Ok(())
    }

    /// Quadrature settings after the environment override.
    pub fn quad(&self) -> Result<QuadConfig, CliError> {
        let mut quad = self.analysis.quad;
        if let Ok(text) = std::env::var(QUAD_TOL_ENV) {
            quad.rel_tol = text
                .trim()
                .parse()
                .ok()
                .filter(|v: &f64| *v > 0.0)
                .ok_or_else(|| CliError::Config(format!("{QUAD_TOL_ENV} must be a positive number, got `{text}`")))?;
        }
        Ok(quad)
    }

    pub fn build_problem(&self) -> Result<Problem, CliError> {
        self.problem.build(&self.params, self.quad()?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"{
        "params": {"a0": 2.2, "C": -100},
        "problem": {
            "a": "-a0", "b": "sin(2*pi*t)",
            "grid": {"type": "uniform", "t0": 0, "h": 1, "alpha": 0},
            "impulse": {"type": "multiplier", "value": "C"},
            "z0": 1, "horizon": 20
        },
        "analysis": {"window": [2, 12]}
    }"#;

    #[test]
    fn parses_and_builds() {
        let cfg = RunConfig::from_json(EXAMPLE).unwrap();
        let p = cfg.build_problem().unwrap();
        assert_eq!(p.a.as_constant(), Some(-2.2));
        assert_eq!(p.impulses, ImpulseRule::Multiplier(-100.0));
        assert_eq!(cfg.analysis.window(), Window::new(2, 12));
        assert_eq!(cfg.analysis.strictness_tol, DEFAULT_STRICTNESS_TOL);
        assert_eq!(cfg.output.samples_per_interval, 64);
        assert!(cfg.problem.mentions("a0").unwrap());
        assert!(cfg.problem.mentions("C").unwrap());
        assert!(!cfg.problem.mentions("q0").unwrap());
    }

    #[test]
    fn impulse_variants() {
        let params = BTreeMap::from([("c".to_string(), 0.25)]);
        let spec: ImpulseSpec = serde_json::from_str(r#"{"type":"explicit","values":[0.5,"c*2"]}"#).unwrap();
        assert_eq!(spec.build(&params).unwrap(), ImpulseRule::Explicit { first: 1, values: vec![0.5, 0.5] });
        let spec: ImpulseSpec = serde_json::from_str(r#"{"type":"alternating","c":"-c"}"#).unwrap();
        assert_eq!(spec.build(&params).unwrap(), ImpulseRule::Alternating(-0.25));
        let spec: ImpulseSpec = serde_json::from_str(r#"{"type":"expression","expr":"c*k"}"#).unwrap();
        assert!(matches!(spec.build(&params).unwrap(), ImpulseRule::Expression(_)));
        let spec: ImpulseSpec = serde_json::from_str(r#"{"type":"constant","c":"t"}"#).unwrap();
        assert!(matches!(spec.build(&params), Err(CliError::Config(_))));
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(matches!(RunConfig::from_json("{"), Err(CliError::Config(_))));
        let unknown = EXAMPLE.replace("\"z0\"", "\"zz\": 1, \"z0\"");
        assert!(matches!(RunConfig::from_json(&unknown), Err(CliError::Config(_))));
        let undefined = EXAMPLE.replace("-a0", "-a1");
        assert!(matches!(RunConfig::from_json(&undefined).unwrap().build_problem(), Err(CliError::Config(_))));
        let sweep = EXAMPLE.replace(
            "\"analysis\"",
            "\"sweep\": {\"parameter\": \"a0\", \"lo\": 1, \"hi\": 2, \"steps\": 1}, \"analysis\"",
        );
        assert!(matches!(RunConfig::from_json(&sweep), Err(CliError::Config(_))));
    }
}
