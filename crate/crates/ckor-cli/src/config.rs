//! Experiment configuration: a single strict TOML schema. Unknown fields are
//! rejected with the offending key path so typos never silently change an
//! experiment.

use std::path::{Path, PathBuf};

use ckor::kernel::KernelSpec;
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    pub data: DataConfig,
    pub kernel: KernelConfig,
    pub estimator: EstimatorConfig,
    pub sweep: Option<SweepConfig>,
    pub evaluation: Option<EvaluationConfig>,
    pub mpc: Option<MpcConfig>,
    pub output: OutputConfig,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub name: SystemName,
    pub ts: f64,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
}

fn default_substeps() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SystemName {
    Duffing,
    VanDerPol,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Load the training set from this CSV instead of generating it.
    pub train_csv: Option<PathBuf>,
    pub generate: Option<GenerateConfig>,
    /// Fit on max-abs-scaled data; evaluation still reports physical units.
    #[serde(default)]
    pub normalize: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateConfig {
    pub initial_conditions: IcsConfig,
    pub input: LawConfig,
    /// Snapshot pairs per trajectory.
    pub steps: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum IcsConfig {
    Grid { points_per_dim: usize, limits: Vec<f64> },
    Random { count: usize, limits: Vec<f64> },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum LawConfig {
    Uniform { lo: f64, hi: f64 },
    Sine { amplitude: f64, freq_hz: f64 },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub state: KernelSpec,
    pub control: KernelSpec,
    pub gamma: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    pub kind: EstimatorKind,
    /// Inducing points / centers; required for ny-ckor and bedmdc.
    pub m: Option<usize>,
    #[serde(default)]
    pub anchor_seed: u64,
    #[serde(default)]
    pub selection: AnchorSelection,
    /// POD energy threshold in percent; reduces the fitted ny-ckor model.
    pub pod_tau: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    Ckor,
    NyCkor,
    Bedmdc,
}

impl EstimatorKind {
    pub fn label(&self) -> &'static str {
        match self {
            EstimatorKind::Ckor => "ckor",
            EstimatorKind::NyCkor => "ny-ckor",
            EstimatorKind::Bedmdc => "bedmdc",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnchorSelection {
    #[default]
    Uniform,
    Farthest,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub mu: Vec<f64>,
    pub gamma: Vec<f64>,
    pub estimators: Vec<EstimatorKind>,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    /// Rollout length per evaluation; 1 means one-step-ahead RMSE.
    #[serde(default = "default_repeats")]
    pub horizon: usize,
}

fn default_repeats() -> usize {
    1
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationConfig {
    pub initial_conditions: IcsConfig,
    pub input: LawConfig,
    pub horizon: usize,
    pub seed: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MpcConfig {
    /// Diagonal of the stage weight on the tracking error.
    pub q: Vec<f64>,
    /// Diagonal of the input weight.
    pub r: Vec<f64>,
    #[serde(default = "default_terminal_scale")]
    pub q_terminal_scale: f64,
    pub horizon: usize,
    pub u_min: Option<Vec<f64>>,
    pub u_max: Option<Vec<f64>>,
    pub x_min: Option<Vec<f64>>,
    pub x_max: Option<Vec<f64>>,
    pub duration: f64,
    /// One closed-loop run per initial state.
    pub x0: Vec<Vec<f64>>,
    /// Piecewise-constant reference phases, in time order.
    pub reference: Vec<ReferencePhase>,
}

fn default_terminal_scale() -> f64 {
    1.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferencePhase {
    /// Phase is active while t < until.
    pub until: f64,
    pub target: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        let cfg: ExperimentConfig = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.system.ts > 0.0) {
            return Err(CliError::Config(format!(
                "system.ts must be positive, got {}",
                self.system.ts
            )));
        }
        if self.system.substeps == 0 {
            return Err(CliError::Config("system.substeps must be at least 1".into()));
        }
        match (&self.data.train_csv, &self.data.generate) {
            (None, None) => {
                return Err(CliError::Config(
                    "data: set either train_csv or a [data.generate] table".into(),
                ))
            }
            (Some(_), Some(_)) => {
                return Err(CliError::Config(
                    "data: train_csv and [data.generate] are mutually exclusive".into(),
                ))
            }
            (Some(path), None) => {
                if !path.exists() {
                    return Err(CliError::Config(format!(
                        "data.train_csv: file {} does not exist",
                        path.display()
                    )));
                }
            }
            (None, Some(g)) => {
                if g.steps == 0 {
                    return Err(CliError::Config(
                        "data.generate.steps must be at least 1".into(),
                    ));
                }
            }
        }
        if !(self.kernel.gamma > 0.0) {
            return Err(CliError::Config(format!(
                "kernel.gamma must be positive, got {}",
                self.kernel.gamma
            )));
        }
        if matches!(
            self.estimator.kind,
            EstimatorKind::NyCkor | EstimatorKind::Bedmdc
        ) && self.estimator.m.is_none()
        {
            return Err(CliError::Config(format!(
                "estimator.m is required for kind = \"{}\"",
                self.estimator.kind.label()
            )));
        }
        if let Some(tau) = self.estimator.pod_tau {
            if !(tau > 0.0 && tau <= 100.0) {
                return Err(CliError::Config(format!(
                    "estimator.pod_tau must lie in (0, 100], got {tau}"
                )));
            }
        }
        if let Some(sweep) = &self.sweep {
            if sweep.mu.is_empty() || sweep.gamma.is_empty() || sweep.estimators.is_empty() {
                return Err(CliError::Config(
                    "sweep: mu, gamma, and estimators must be non-empty".into(),
                ));
            }
            if sweep.repeats == 0 || sweep.horizon == 0 {
                return Err(CliError::Config(
                    "sweep: repeats and horizon must be at least 1".into(),
                ));
            }
            if sweep
                .estimators
                .iter()
                .any(|e| matches!(e, EstimatorKind::NyCkor | EstimatorKind::Bedmdc))
                && self.estimator.m.is_none()
            {
                return Err(CliError::Config(
                    "sweep: estimator.m is required when sweeping ny-ckor or bedmdc".into(),
                ));
            }
        }
        if let Some(eval) = &self.evaluation {
            if eval.horizon == 0 {
                return Err(CliError::Config("evaluation.horizon must be at least 1".into()));
            }
        }
        if let Some(mpc) = &self.mpc {
            if mpc.horizon == 0 {
                return Err(CliError::Config("mpc.horizon must be at least 1".into()));
            }
            if mpc.duration < 0.0 {
                return Err(CliError::Config("mpc.duration must be non-negative".into()));
            }
            if mpc.x0.is_empty() {
                return Err(CliError::Config("mpc.x0 must list at least one initial state".into()));
            }
            if mpc.reference.is_empty() {
                return Err(CliError::Config("mpc.reference must list at least one phase".into()));
            }
        }
        Ok(())
    }

    /// Apply the --seed override: every configured seed is re-derived from it.
    pub fn override_seed(&mut self, seed: u64) {
        if let Some(g) = &mut self.data.generate {
            g.seed = seed;
        }
        self.estimator.anchor_seed = seed.wrapping_add(1);
        if let Some(eval) = &mut self.evaluation {
            eval.seed = seed.wrapping_add(2);
        }
    }
}
