//! JSON run configuration: schema-validated, unknown fields rejected.

use serde::Deserialize;

use lmss_core::hurst::{HurstSpec, Rect};

#[derive(Debug)]
pub enum CliError {
    /// Schema or argument problem: exit code 2.
    Config(String),
    /// Numeric failure inside a computation: exit code 3 (4 for budget).
    Core(lmss_core::CoreError),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<lmss_core::CoreError> for CliError {
    fn from(e: lmss_core::CoreError) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(lmss_core::CoreError::BudgetExceeded { .. }) => 4,
            CliError::Core(_) => 3,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Top-level run configuration document.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: String,
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<String>,
    #[serde(default)]
    pub spec: Option<HurstSpec>,
    pub params: serde_json::Value,
}

impl RunConfig {
    pub fn parse(text: &str) -> CliResult<(Self, serde_json::Value)> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| CliError::config(format!("invalid JSON: {e}")))?;
        let config: RunConfig = serde_json::from_value(value.clone())
            .map_err(|e| CliError::config(format!("schema violation: {e}")))?;
        Ok((config, value))
    }

    pub fn params<T: serde::de::DeserializeOwned>(&self) -> CliResult<T> {
        serde_json::from_value(self.params.clone())
            .map_err(|e| CliError::config(format!("params schema violation: {e}")))
    }

    pub fn require_spec(&self) -> CliResult<&HurstSpec> {
        self.spec.as_ref().ok_or_else(|| CliError::config("this command requires a `spec` block"))
    }
}

fn default_truncation() -> f64 {
    10.0
}
fn default_equality_tol() -> f64 {
    1e-9
}
fn default_target_rel_err() -> f64 {
    1e-6
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateParams {
    pub alpha: f64,
    pub rect: Rect,
    pub eval_density: usize,
    pub d: usize,
    pub spacing: f64,
    #[serde(default = "default_truncation")]
    pub truncation_l: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocaltimeParams {
    pub alpha: f64,
    pub rect: Rect,
    pub eval_density: usize,
    pub d: usize,
    pub spacing: f64,
    #[serde(default = "default_truncation")]
    pub truncation_l: f64,
    pub bins_per_axis: usize,
    #[serde(default)]
    pub bandwidth: Option<f64>,
    pub x: Vec<f64>,
    #[serde(default)]
    pub smoothing_k: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExampleParams {
    pub m: u32,
    pub q: f64,
    pub k: f64,
    #[serde(default)]
    pub h_floor: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckExistenceParams {
    pub d: usize,
    #[serde(default)]
    pub rect: Option<Rect>,
    #[serde(default)]
    pub example: Option<ExampleParams>,
    #[serde(default = "default_equality_tol")]
    pub equality_tol: f64,
    #[serde(default = "default_target_rel_err")]
    pub target_rel_err: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyLemmasParams {
    #[serde(default = "VerifyLemmasParams::default_triangle_samples")]
    pub triangle_samples: usize,
    #[serde(default = "VerifyLemmasParams::default_bound_instances")]
    pub bound_instances: usize,
    #[serde(default = "VerifyLemmasParams::default_bound_trials")]
    pub bound_trials: usize,
    #[serde(default = "VerifyLemmasParams::default_sum_z_trials")]
    pub sum_z_trials: usize,
}

impl VerifyLemmasParams {
    fn default_triangle_samples() -> usize {
        10_000
    }
    fn default_bound_instances() -> usize {
        30
    }
    fn default_bound_trials() -> usize {
        20_000
    }
    fn default_sum_z_trials() -> usize {
        8000
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanIncrementsParams {
    pub alpha: f64,
    pub rect: Rect,
    pub pairs: usize,
    #[serde(default = "default_target_rel_err")]
    pub target_rel_err: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingProbeParams {
    pub probe: String,
    pub alpha: f64,
    pub d: usize,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub deltas: Option<Vec<f64>>,
    #[serde(default)]
    pub radii: Option<Vec<f64>>,
    pub replicates: usize,
    pub x: Vec<f64>,
    #[serde(default)]
    pub corner: Option<Vec<f64>>,
    #[serde(default)]
    pub t: Option<Vec<f64>>,
    pub eval_density: usize,
    pub spacing: f64,
    #[serde(default = "default_truncation")]
    pub truncation_l: f64,
    #[serde(default)]
    pub bandwidth: Option<f64>,
    #[serde(default = "ScalingProbeParams::default_tolerance")]
    pub slope_tolerance: f64,
    #[serde(default = "ScalingProbeParams::default_tolerance")]
    pub growth_tolerance: f64,
}

impl ScalingProbeParams {
    fn default_tolerance() -> f64 {
        0.15
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateEntry {
    pub alpha: f64,
    pub h: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateParams {
    pub entries: Vec<CalibrateEntry>,
    #[serde(default = "default_target_rel_err")]
    pub target_rel_err: f64,
}
