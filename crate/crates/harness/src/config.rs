//! Experiment configuration: one JSON document, optionally patched by
//! dotted-path overrides such as `idm.lambda=0.1`.

use std::path::{Path, PathBuf};

use idm_core::baselines::{BootstrapConfig, OracleConfig};
use idm_core::optim::OptimizerConfig;
use idm_core::synthdata::DgpSpec;
use idm_core::ModelSpec;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Interval,
    Coverage,
    Convergence,
    Runtime,
    Fisher,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Interval => "interval",
            ExperimentKind::Coverage => "coverage",
            ExperimentKind::Convergence => "convergence",
            ExperimentKind::Runtime => "runtime",
            ExperimentKind::Fisher => "fisher",
        }
    }
}

/// `"auto"` or a fixed positive width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaSetting {
    Auto,
    Fixed(f64),
}

impl Serialize for LambdaSetting {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            LambdaSetting::Auto => s.serialize_str("auto"),
            LambdaSetting::Fixed(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for LambdaSetting {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match Value::deserialize(d)? {
            Value::String(s) if s == "auto" => Ok(LambdaSetting::Auto),
            Value::Number(n) => n
                .as_f64()
                .map(LambdaSetting::Fixed)
                .ok_or_else(|| serde::de::Error::custom("lambda is not a finite number")),
            other => Err(serde::de::Error::custom(format!(
                "lambda must be \"auto\" or a number, got {other}"
            ))),
        }
    }
}

fn default_beta() -> f64 {
    0.95
}

fn default_samples() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdmSettings {
    pub lambda: LambdaSetting,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default)]
    pub central_diff: bool,
    /// Iterates averaged per phase by the minibatch IDM.
    #[serde(rename = "S", default = "default_samples")]
    pub samples: usize,
}

impl Default for IdmSettings {
    fn default() -> Self {
        IdmSettings {
            lambda: LambdaSetting::Auto,
            beta: default_beta(),
            central_diff: false,
            samples: default_samples(),
        }
    }
}

/// Which evaluation `ψ` to study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EvalConfig {
    PointPrediction {
        x0: Vec<f64>,
    },
    PredictionGrid {
        points: Vec<Vec<f64>>,
    },
    /// Average cross entropy on a random held-out part of the data; the
    /// model is trained on the rest.
    HoldoutAvgCrossEntropy {
        fraction: f64,
    },
    /// Average unmet demand. The newsvendor DGP supplies its own evaluation
    /// set; other data needs a holdout `fraction`.
    AvgUnmetDemand {
        #[serde(default)]
        fraction: Option<f64>,
    },
}

impl EvalConfig {
    pub fn arity(&self) -> usize {
        match self {
            EvalConfig::PredictionGrid { points } => points.len(),
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselinesConfig {
    #[serde(default)]
    pub delta: bool,
    #[serde(default)]
    pub bootstrap: Option<BootstrapConfig>,
    #[serde(default)]
    pub simulation: Option<OracleConfig>,
}

fn default_replicates() -> usize {
    50
}

fn default_max_failure() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverageSettings {
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_max_failure")]
    pub max_failure_fraction: f64,
}

impl Default for CoverageSettings {
    fn default() -> Self {
        CoverageSettings {
            replicates: default_replicates(),
            max_failure_fraction: default_max_failure(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSettings {
    pub n_values: Vec<usize>,
    pub lambdas: Vec<f64>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    /// Fresh datasets per `n` for the reference sampling variance.
    #[serde(default = "default_replicates")]
    pub oracle_replicates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSource {
    pub csv: PathBuf,
}

fn default_fisher_cap() -> usize {
    idm_core::idm::DEFAULT_FISHER_CAP
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub dgp: Option<DgpSpec>,
    /// Real data in place of a DGP; only the interval, runtime and fisher
    /// experiments accept it.
    #[serde(default)]
    pub data: Option<DataSource>,
    pub model: ModelSpec,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub idm: IdmSettings,
    pub eval: EvalConfig,
    #[serde(default)]
    pub baselines: BaselinesConfig,
    #[serde(default)]
    pub coverage: CoverageSettings,
    #[serde(default)]
    pub sweep: Option<SweepSettings>,
    #[serde(default = "default_fisher_cap")]
    pub fisher_cap: usize,
    #[serde(default)]
    pub output: Option<String>,
    #[serde(default)]
    pub root_seed: u64,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        Self::from_value(value)
    }

    pub fn from_value(value: Value) -> Result<Self> {
        let config: ExperimentConfig =
            serde_json::from_value(value).map_err(|e| HarnessError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads `path` and applies `key=value` overrides in order.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut value: Value = serde_json::from_str(&text).map_err(|source| HarnessError::Json {
            path: path.to_path_buf(),
            source,
        })?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        Self::from_value(value)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(HarnessError::Config(m.to_string()));
        match (&self.dgp, &self.data) {
            (None, None) => return bad("one of `dgp` or `data` is required"),
            (Some(_), Some(_)) => return bad("`dgp` and `data` are mutually exclusive"),
            _ => {}
        }
        if self.data.is_some()
            && matches!(self.experiment, ExperimentKind::Coverage | ExperimentKind::Convergence)
        {
            return bad("coverage and convergence need a known `dgp`");
        }
        if let LambdaSetting::Fixed(l) = self.idm.lambda {
            if !(l > 0.0 && l.is_finite()) {
                return bad("idm.lambda must be positive");
            }
        }
        if !(self.idm.beta > 0.0 && self.idm.beta < 1.0) {
            return bad("idm.beta must lie in (0, 1)");
        }
        if self.idm.samples == 0 {
            return bad("idm.S must be at least 1");
        }
        match &self.eval {
            EvalConfig::PredictionGrid { points } if points.is_empty() => return bad("prediction grid is empty"),
            EvalConfig::HoldoutAvgCrossEntropy { fraction } if !(*fraction > 0.0 && *fraction < 1.0) => {
                return bad("holdout fraction must lie in (0, 1)")
            }
            _ => {}
        }
        if let Some(b) = &self.baselines.bootstrap {
            if b.replicates < 2 {
                return bad("bootstrap B must be at least 2");
            }
        }
        if let Some(s) = &self.baselines.simulation {
            if s.replicates < 2 {
                return bad("simulation R must be at least 2");
            }
            if self.dgp.is_none() {
                return bad("simulation needs a `dgp`");
            }
        }
        if !(0.0..1.0).contains(&self.coverage.max_failure_fraction) {
            return bad("coverage.max_failure_fraction must lie in [0, 1)");
        }
        match self.experiment {
            ExperimentKind::Coverage if self.coverage.replicates == 0 => return bad("coverage.replicates must be positive"),
            ExperimentKind::Convergence => {
                let Some(s) = &self.sweep else {
                    return bad("convergence needs a `sweep` section");
                };
                if s.n_values.is_empty() || s.lambdas.is_empty() {
                    return bad("sweep needs at least one n and one lambda");
                }
                if s.lambdas.iter().any(|l| !(*l > 0.0)) {
                    return bad("sweep lambdas must be positive");
                }
                if s.replicates < 2 || s.oracle_replicates < 2 {
                    return bad("sweep needs at least 2 replicates and 2 oracle replicates");
                }
                if self.eval.arity() != 1 {
                    return bad("convergence needs a scalar evaluation");
                }
            }
            ExperimentKind::Runtime if self.baselines.bootstrap.is_none() => {
                return bad("runtime needs `baselines.bootstrap`")
            }
            _ => {}
        }
        Ok(())
    }
}

/// Sets the dotted `path` in `root` to `value`, parsed as JSON when
/// possible and as a string otherwise. Missing objects along the path are
/// created.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| HarnessError::Config(format!("override `{assignment}` is not key=value")))?;
    if path.is_empty() {
        return Err(HarnessError::Config("override has an empty key".into()));
    }
    let parsed = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let mut keys = path.split('.').peekable();
    while let Some(key) = keys.next() {
        if !node.is_object() {
            if node.is_null() {
                *node = Value::Object(Default::default());
            } else {
                return Err(HarnessError::Config(format!("`{path}`: `{key}` is under a non-object value")));
            }
        }
        let map = node.as_object_mut().expect("checked above");
        if keys.peek().is_none() {
            map.insert(key.to_string(), parsed);
            return Ok(());
        }
        node = map.entry(key.to_string()).or_insert(Value::Null);
    }
    unreachable!("split yields at least one key")
}
