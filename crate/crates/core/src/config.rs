//! The JSON experiment document consumed by the CLI and the C ABI.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SdbliError};
use crate::forward::NewtonConfig;
use crate::grid::GridSpec;
use crate::solver::SolverConfig;
use crate::system::{make_partition, PartitionScheme, TruthKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub grid: GridConfig,
    pub system: SystemConfig,
    pub truth: TruthConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    pub training: TrainingConfig,
    #[serde(default)]
    pub estimation: EstimationConfig,
    #[serde(default)]
    pub newton: NewtonConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    #[serde(rename = "P")]
    pub p: usize,
    pub scheme: PartitionScheme,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthConfig {
    pub kind: TruthKind,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    /// Split evenly as `δ / √P` unless `deltas` is given.
    #[serde(default)]
    pub delta_total: f64,
    #[serde(default)]
    pub deltas: Option<Vec<f64>>,
    #[serde(default)]
    pub seed: u64,
    /// Total noise levels for the regularization sweep, strictly decreasing.
    #[serde(default)]
    pub sweep: Option<Vec<f64>>,
    /// Replications per sweep level; defaults to `diagnostics.replications`.
    #[serde(default)]
    pub sweep_replications: Option<usize>,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            delta_total: 0.0,
            deltas: None,
            seed: 0,
            sweep: None,
            sweep_replications: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    #[serde(rename = "N")]
    pub n_samples: usize,
    pub seed: u64,
    #[serde(default = "default_trunc_tol")]
    pub trunc_tol: f64,
    #[serde(default)]
    pub include_truth: bool,
    /// Generator family; defaults to the truth's.
    #[serde(default)]
    pub kind: Option<TruthKind>,
}

fn default_trunc_tol() -> f64 {
    crate::data_driven::DEFAULT_TRUNC_TOL
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimationConfig {
    pub n_samples: usize,
    pub seed: u64,
    /// Sampling radius around the truth; defaults to the ball radius σ.
    #[serde(default)]
    pub radius: Option<f64>,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        EstimationConfig {
            n_samples: 16,
            seed: 0,
            radius: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsConfig {
    #[serde(rename = "R")]
    pub replications: usize,
    pub slack: f64,
    pub record_period: usize,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            replications: 50,
            slack: 1e-3,
            record_period: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: String,
    pub prefix: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            directory: "sdbli-out".into(),
            prefix: "run".into(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)
            .map_err(|e| SdbliError::config("config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn spec(&self) -> Result<GridSpec> {
        GridSpec::new(self.grid.n)
    }

    /// Total noise level actually applied.
    pub fn delta_total(&self) -> f64 {
        match &self.noise.deltas {
            Some(d) => d.iter().map(|x| x * x).sum::<f64>().sqrt(),
            None => self.noise.delta_total,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let spec = self.spec()?;
        make_partition(spec, self.system.p, self.system.scheme)?;
        if !(self.noise.delta_total >= 0.0) || !self.noise.delta_total.is_finite() {
            return Err(SdbliError::config("noise.delta_total", "must be finite and nonnegative"));
        }
        if let Some(d) = &self.noise.deltas {
            if d.len() != self.system.p {
                return Err(SdbliError::config(
                    "noise.deltas",
                    format!("needs one level per equation ({}), got {}", self.system.p, d.len()),
                ));
            }
            if d.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
                return Err(SdbliError::config("noise.deltas", "levels must be finite and nonnegative"));
            }
        }
        if let Some(s) = &self.noise.sweep {
            if s.is_empty() || s.iter().any(|d| !(*d > 0.0)) || s.windows(2).any(|w| !(w[1] < w[0])) {
                return Err(SdbliError::config(
                    "noise.sweep",
                    "levels must be positive and strictly decreasing",
                ));
            }
        }
        if self.noise.sweep_replications.is_some_and(|r| r < 2) {
            return Err(SdbliError::config("noise.sweep_replications", "must be at least 2"));
        }
        if self.training.n_samples == 0 {
            return Err(SdbliError::config("training.N", "must be at least 1"));
        }
        if !(self.training.trunc_tol >= 0.0) {
            return Err(SdbliError::config("training.trunc_tol", "must be nonnegative"));
        }
        if self.estimation.n_samples < 2 {
            return Err(SdbliError::config("estimation.n_samples", "must be at least 2"));
        }
        if let Some(r) = self.estimation.radius {
            if !(r >= 0.0) {
                return Err(SdbliError::config("estimation.radius", "must be nonnegative"));
            }
        }
        self.newton.validate()?;
        self.solver.validate()?;
        if self.diagnostics.replications < 2 {
            return Err(SdbliError::config("diagnostics.R", "must be at least 2"));
        }
        if !(self.diagnostics.slack >= 0.0) {
            return Err(SdbliError::config("diagnostics.slack", "must be nonnegative"));
        }
        if self.diagnostics.record_period == 0 {
            return Err(SdbliError::config("diagnostics.record_period", "must be at least 1"));
        }
        if self.output.prefix.is_empty() {
            return Err(SdbliError::config("output.prefix", "must not be empty"));
        }
        Ok(())
    }
}
