//! Scenario configuration: TOML schema, defaults and validation.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cbf::{AgentState, CbfError, CbfParams, Vec2};
use crate::confidence::ConfidenceScript;
use crate::mpc::{Bounds2, ControllerConfig, MpcError, MpcParams, ReferenceMode};
use crate::trust::{TrustConfig, TrustError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("serialisation error: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("invalid config: {0}")]
    Cbf(#[from] CbfError),
    #[error("invalid config: {0}")]
    Mpc(#[from] MpcError),
    #[error("invalid config: {0}")]
    Trust(#[from] TrustError),
}

/// Axis-aligned box of admissible ego positions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBounds {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Default for GridBounds {
    fn default() -> Self {
        Self {
            min: [0.0, 0.0],
            max: [50.0, 50.0],
        }
    }
}

impl From<GridBounds> for Bounds2 {
    fn from(g: GridBounds) -> Self {
        Bounds2::new(Vec2::from(g.min), Vec2::from(g.max))
    }
}

/// Where a pedestrian's trust comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrustMode {
    /// Held constant for the whole run.
    Fixed { value: f64 },
    /// Estimated online from a scripted confidence stream.
    Dynamic { script: ConfidenceScript },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PedestrianConfig {
    pub start: [f64; 2],
    #[serde(default)]
    pub velocity: [f64; 2],
    pub trust: TrustMode,
}

impl PedestrianConfig {
    pub fn initial_state(&self) -> AgentState {
        AgentState::new(Vec2::from(self.start), Vec2::from(self.velocity))
    }
}

fn default_kp() -> f64 {
    1.0
}
fn default_goal_tol() -> f64 {
    0.5
}
fn default_max_steps() -> u64 {
    400
}
fn default_u_max() -> f64 {
    5.0
}
fn default_solver_tol() -> f64 {
    1e-6
}
fn default_max_iters() -> usize {
    200
}
fn default_decimation() -> u64 {
    1
}

/// Everything needed to run one closed-loop scenario.
///
/// Optional fields are filled with their defaults on parse, so the dump
/// produced by [`ScenarioConfig::to_toml`] lists every effective value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub dt: f64,
    pub horizon: usize,
    /// Safety radius.
    pub radius: f64,
    pub gamma_ini: f64,
    pub delta: f64,
    pub lambda: f64,
    pub goal: [f64; 2],
    pub ego_start: [f64; 2],
    #[serde(default = "default_u_max")]
    pub u_max: f64,
    #[serde(default = "default_kp")]
    pub kp: f64,
    #[serde(default = "default_goal_tol")]
    pub goal_tol: f64,
    #[serde(default = "default_max_steps")]
    pub max_steps: u64,
    #[serde(default = "default_solver_tol")]
    pub solver_tol: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default)]
    pub terminal_weight: f64,
    #[serde(default)]
    pub reference_mode: ReferenceMode,
    /// Dynamic trust is updated every this many simulation steps.
    #[serde(default = "default_decimation")]
    pub trust_decimation: u64,
    #[serde(default)]
    pub grid_bounds: GridBounds,
    #[serde(default)]
    pub trust: TrustConfig,
    #[serde(default)]
    pub pedestrians: Vec<PedestrianConfig>,
}

impl ScenarioConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    /// Effective configuration with every default spelled out.
    pub fn to_toml(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn cbf_params(&self) -> Result<CbfParams, CbfError> {
        CbfParams::new(self.radius, self.gamma_ini, self.delta, self.lambda)
    }

    pub fn mpc_params(&self) -> MpcParams {
        MpcParams {
            dt: self.dt,
            horizon: self.horizon,
            u_max: self.u_max,
            state_bounds: self.grid_bounds.into(),
            solver_tol: self.solver_tol,
            max_iters: self.max_iters,
            terminal_weight: self.terminal_weight,
        }
    }

    pub fn controller_config(&self) -> Result<ControllerConfig, ConfigError> {
        Ok(ControllerConfig {
            mpc: self.mpc_params(),
            cbf: self.cbf_params()?,
            kp: self.kp,
            reference_mode: self.reference_mode,
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        self.cbf_params()?;
        self.mpc_params().validate()?;
        self.trust.validate()?;
        if !(self.kp > 0.0) {
            return invalid(format!("kp must be > 0, got {}", self.kp));
        }
        if !(self.goal_tol > 0.0) {
            return invalid(format!("goal_tol must be > 0, got {}", self.goal_tol));
        }
        if self.max_steps < 1 {
            return invalid("max_steps must be ≥ 1".into());
        }
        if self.trust_decimation < 1 {
            return invalid("trust_decimation must be ≥ 1".into());
        }
        let finite = |v: &[f64; 2]| v.iter().all(|c| c.is_finite());
        if !finite(&self.goal) || !finite(&self.ego_start) {
            return invalid("goal and ego_start must be finite".into());
        }
        let bounds: Bounds2 = self.grid_bounds.into();
        if !bounds.contains(&Vec2::from(self.ego_start)) {
            return invalid(format!("ego_start {:?} lies outside grid_bounds", self.ego_start));
        }
        for (i, p) in self.pedestrians.iter().enumerate() {
            if !finite(&p.start) || !finite(&p.velocity) {
                return invalid(format!("pedestrian {}: start and velocity must be finite", i + 1));
            }
            if let TrustMode::Fixed { value } = p.trust {
                if !(0.0..=1.0).contains(&value) {
                    return invalid(format!(
                        "pedestrian {}: trust must lie in [0, 1], got {value}",
                        i + 1
                    ));
                }
            }
        }
        Ok(())
    }
}
