//! Scenario description, loaded from TOML. Every field has a default, so an
//! empty file is a valid scenario.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{ControlMode, ControlParams, Penalties};
use crate::hocbf::RecoveryMode;
use crate::mergesim::{FuelCoefficients, Lane, Resistance};
use crate::ocplan::{beta_from_alpha, TrackingGains};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Geometry {
    pub length: f64,
    pub phi: f64,
    pub delta0: f64,
}

impl Default for Geometry {
    fn default() -> Self {
        Self { length: 400.0, phi: 1.8, delta0: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Bounds {
    pub u_min: f64,
    pub u_max: f64,
    pub v_min: f64,
    pub v_max: f64,
}

impl Default for Bounds {
    fn default() -> Self {
        Self { u_min: -3.924, u_max: 3.924, v_min: 0.0, v_max: 30.0 }
    }
}

/// Exactly one of `alpha` / `beta`; with neither, `alpha = 0.25`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Objective {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
}

pub const DEFAULT_ALPHA: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerConfig {
    pub mode: ControlMode,
    pub eps_clf: f64,
    pub beta_relax: f64,
    pub penalties: Penalties,
    pub recovery: RecoveryMode,
    pub beta1: f64,
    pub beta2: f64,
    pub gains: TrackingGains,
    /// Use the noise bound in the barrier rows (known disturbance).
    pub robust: bool,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        let p = ControlParams::default();
        Self {
            mode: p.mode,
            eps_clf: p.eps_clf,
            beta_relax: p.beta_relax,
            penalties: p.penalties,
            recovery: p.recovery,
            beta1: p.beta1,
            beta2: p.beta2,
            gains: p.gains,
            robust: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedArrival {
    pub t: f64,
    pub lane: Lane,
    pub v0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArrivalConfig {
    /// Poisson rate per lane (CAVs/s).
    pub rate_main: f64,
    pub rate_merge: f64,
    pub v0_min: f64,
    pub v0_max: f64,
    /// Explicit arrivals; when non-empty the Poisson streams are not used.
    pub fixed: Vec<FixedArrival>,
}

impl Default for ArrivalConfig {
    fn default() -> Self {
        Self { rate_main: 0.2, rate_merge: 0.2, v0_min: 15.0, v0_max: 20.0, fixed: Vec::new() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    /// Uniform bound on the position-rate disturbance (m/s).
    pub w1: f64,
    /// Uniform bound on the speed-rate disturbance (m/s²).
    pub w2: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DynamicsModel {
    #[default]
    Linear,
    Nonlinear,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DynamicsConfig {
    pub model: DynamicsModel,
    pub resistance: Resistance,
    pub fuel: FuelCoefficients,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub seed: u64,
    /// Arrivals are drawn on `[0, horizon)`.
    pub horizon: f64,
    pub dt: f64,
    /// Stop spawning after this many CAVs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_cavs: Option<usize>,
    pub geometry: Geometry,
    pub bounds: Bounds,
    pub objective: Objective,
    pub controller: ControllerConfig,
    pub arrivals: ArrivalConfig,
    pub noise: NoiseConfig,
    pub dynamics: DynamicsConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            horizon: 100.0,
            dt: 0.1,
            max_cavs: None,
            geometry: Geometry::default(),
            bounds: Bounds::default(),
            objective: Objective::default(),
            controller: ControllerConfig::default(),
            arrivals: ArrivalConfig::default(),
            noise: NoiseConfig::default(),
            dynamics: DynamicsConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg = Self::parse_unvalidated(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Syntax and key checks only; for tools that report semantic problems
    /// themselves.
    pub fn parse_unvalidated(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        Self::from_toml_str(&Self::read(path)?)
    }

    pub fn load_unvalidated(path: &std::path::Path) -> Result<Self, ConfigError> {
        Self::parse_unvalidated(&Self::read(path)?)
    }

    fn read(path: &std::path::Path) -> Result<String, ConfigError> {
        std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    /// Time weight `β` of the merging objective.
    pub fn beta(&self) -> Result<f64, ConfigError> {
        match (self.objective.alpha, self.objective.beta) {
            (Some(_), Some(_)) => Err(ConfigError::Invalid("set either objective.alpha or objective.beta, not both".into())),
            (None, Some(b)) if b >= 0.0 && b.is_finite() => Ok(b),
            (None, Some(b)) => Err(ConfigError::Invalid(format!("objective.beta must be >= 0, got {b}"))),
            (alpha, None) => beta_from_alpha(alpha.unwrap_or(DEFAULT_ALPHA), self.bounds.u_max, self.bounds.u_min)
                .map_err(|e| ConfigError::Invalid(format!("objective.alpha: {e}"))),
        }
    }

    /// Set `alpha` and clear `beta`.
    pub fn set_alpha(&mut self, alpha: f64) {
        self.objective = Objective { alpha: Some(alpha), beta: None };
    }

    pub fn set_beta(&mut self, beta: f64) {
        self.objective = Objective { alpha: None, beta: Some(beta) };
    }

    pub fn noise_active(&self) -> bool {
        self.noise.w1 > 0.0 || self.noise.w2 > 0.0
    }

    pub fn control_params(&self) -> ControlParams {
        let c = &self.controller;
        ControlParams {
            u_min: self.bounds.u_min,
            u_max: self.bounds.u_max,
            v_min: self.bounds.v_min,
            v_max: self.bounds.v_max,
            phi: self.geometry.phi,
            delta0: self.geometry.delta0,
            length: self.geometry.length,
            eps_clf: c.eps_clf,
            penalties: c.penalties,
            beta_relax: c.beta_relax,
            dt: self.dt,
            recovery: c.recovery,
            noise_bound: c.robust.then_some([self.noise.w1, self.noise.w2]),
            gains: c.gains,
            fuel: self.dynamics.fuel,
            beta1: c.beta1,
            beta2: c.beta2,
            mode: c.mode,
            resistance: (self.dynamics.model == DynamicsModel::Nonlinear).then_some(self.dynamics.resistance),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        self.beta()?;
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return bad(format!("horizon must be >= 0, got {}", self.horizon));
        }
        let a = &self.arrivals;
        if !(a.rate_main >= 0.0 && a.rate_merge >= 0.0) {
            return bad("arrival rates must be >= 0".into());
        }
        if !(0.0 < a.v0_min && a.v0_min <= a.v0_max) {
            return bad(format!("need 0 < v0_min <= v0_max, got [{}, {}]", a.v0_min, a.v0_max));
        }
        if a.v0_max >= self.bounds.v_max {
            return bad("entry speeds must stay below v_max".into());
        }
        for f in &a.fixed {
            if !(f.t >= 0.0 && f.v0 > 0.0 && f.v0 < self.bounds.v_max) {
                return bad(format!("fixed arrival {f:?} needs t >= 0 and 0 < v0 < v_max"));
            }
        }
        if !(self.noise.w1 >= 0.0 && self.noise.w2 >= 0.0) {
            return bad("noise bounds must be >= 0".into());
        }
        if self.dynamics.model == DynamicsModel::Nonlinear {
            self.dynamics.resistance.validate().map_err(ConfigError::Invalid)?;
        }
        self.control_params().validate().map_err(ConfigError::Invalid)
    }
}
