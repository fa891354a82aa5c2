//! Experiment configuration shared by every CLI subcommand and the service.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::envs::{DrivingParams, DrivingTask, EnvConfig, GridArmParams, Line1DParams, TowerParams};
use crate::error::{Error, Result};
use crate::game::{AugmentedState, Belief, GameSpec};
use crate::human::HumanModel;
use crate::solver::RobotTiming;

/// Legibility weight used by transparent sessions unless configured. On the
/// line worked example any positive weight reveals the type; above about 5
/// the revealing detour also costs task reward.
pub const DEFAULT_TRANSPARENT_LAMBDA: f64 = 8.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvConfig,
    #[serde(default = "default_model")]
    pub model: HumanModel,
    /// Empty means the environment's own horizon.
    #[serde(default)]
    pub horizons: Vec<usize>,
    /// Learning rates to sweep; empty means the model's own rate.
    #[serde(default)]
    pub rates: Vec<f64>,
    /// Prior probabilities of the capable type used as roots.
    #[serde(default = "default_prior_grid")]
    pub prior_grid: Vec<f64>,
    /// Legibility weight for solve/classify/sweep/oracle; 0 is the opaque solver.
    #[serde(default)]
    pub lambda: f64,
    #[serde(default)]
    pub seed: u64,
    /// Single root for `solve`/`classify`; without it every grid root is used.
    #[serde(default)]
    pub root: Option<RootConfig>,
    #[serde(default)]
    pub robot_timing: RobotTiming,
    #[serde(default)]
    pub outputs: Outputs,
    #[serde(default)]
    pub service: ServiceConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RootConfig {
    /// Physical coordinates (e.g. `[0.6]` on the line).
    pub state: Vec<f64>,
    /// Probability of the capable type.
    pub prior: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    pub csv: Option<PathBuf>,
    pub json: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ServiceConfig {
    pub port: u16,
    pub log_path: PathBuf,
    pub transparent_lambda: f64,
    /// Environments offered to clients.
    pub envs: Vec<EnvConfig>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            port: 8080,
            log_path: PathBuf::from("sessions.jsonl"),
            transparent_lambda: DEFAULT_TRANSPARENT_LAMBDA,
            envs: default_service_envs(),
        }
    }
}

/// The line worked example, the arm, the tower and the three driving tasks.
pub fn default_service_envs() -> Vec<EnvConfig> {
    let mut envs = vec![
        EnvConfig::Line1d(Line1DParams::worked_example()),
        EnvConfig::GridArm(GridArmParams::default()),
        EnvConfig::Tower(TowerParams::default()),
    ];
    for task in [DrivingTask::Passing, DrivingTask::Turning, DrivingTask::Parking] {
        envs.push(EnvConfig::Driving(DrivingParams { task, ..Default::default() }));
    }
    envs
}

fn default_model() -> HumanModel {
    HumanModel::Incremental { rate: 0.2, interpolate: false }
}

pub fn default_prior_grid() -> Vec<f64> {
    (0..=10).map(|k| k as f64 / 10.0).collect()
}

impl ExperimentConfig {
    pub fn new(env: EnvConfig) -> Self {
        ExperimentConfig {
            env,
            model: default_model(),
            horizons: vec![],
            rates: vec![],
            prior_grid: default_prior_grid(),
            lambda: 0.0,
            seed: 0,
            root: None,
            robot_timing: RobotTiming::default(),
            outputs: Outputs::default(),
            service: ServiceConfig::default(),
        }
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.prior_grid.is_empty() {
            return Err(Error::Config("prior_grid must be non-empty".into()));
        }
        if let Some(p) = self.prior_grid.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::Config(format!("prior {p} outside [0, 1]")));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.service.transparent_lambda.is_finite() && self.service.transparent_lambda >= 0.0) {
            return Err(Error::Config("service.transparent_lambda must be >= 0".into()));
        }
        for &r in &self.rates {
            self.model.with_rate(r)?;
        }
        if let Some(root) = &self.root {
            if !(0.0..=1.0).contains(&root.prior) {
                return Err(Error::Config(format!("root prior {} outside [0, 1]", root.prior)));
            }
        }
        Ok(())
    }

    pub fn horizons(&self) -> Vec<usize> {
        if self.horizons.is_empty() {
            vec![self.env.horizon()]
        } else {
            self.horizons.clone()
        }
    }

    /// Model with the first configured rate applied (for single-run commands).
    pub fn primary_model(&self) -> Result<HumanModel> {
        match self.rates.first() {
            Some(&r) => self.model.with_rate(r),
            None => Ok(self.model.clone()),
        }
    }

    /// The configured single root, or every sweep state crossed with the prior grid.
    pub fn roots(&self, spec: &GameSpec) -> Result<Vec<AugmentedState>> {
        match &self.root {
            Some(r) => {
                let s = spec
                    .state_at(&r.state)
                    .ok_or_else(|| Error::Config(format!("root state {:?} is not a grid state", r.state)))?;
                Ok(vec![AugmentedState::root(s, Belief::from_scalar(r.prior)?)])
            }
            None => {
                let beliefs: Vec<Belief> =
                    self.prior_grid.iter().map(|&p| Belief::from_scalar(p)).collect::<Result<_>>()?;
                Ok(self
                    .env
                    .sweep_states(spec)
                    .into_iter()
                    .flat_map(|s| beliefs.iter().map(move |b| AugmentedState::root(s, b.clone())))
                    .collect())
            }
        }
    }
}
