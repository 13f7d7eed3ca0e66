//! Session configuration: controller and simulator parameters plus loop rates.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use glovelink::geometry::Pose;
use glovelink::simpsm::SimConfig;
use glovelink::teleop::ControlConfig;
use serde::{Deserialize, Serialize};

/// Environment variable naming a JSON config file.
pub const CONFIG_ENV: &str = "GLOVELINK_CONFIG";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub control: ControlConfig<f64>,
    pub sim: SimConfig<f64>,
    /// Expected hand stream rate, Hz.
    pub input_rate: f64,
    /// robot_state publication rate, Hz.
    pub broadcast_rate: f64,
    /// Whether tracking starts enabled (otherwise a Ring hold is needed first).
    pub tracking_on_start: bool,
    /// Tip pose at start, and center of the tip cube.
    pub tip_home: Pose<f64>,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            control: ControlConfig::default(),
            sim: SimConfig::default(),
            input_rate: 120.0,
            broadcast_rate: 60.0,
            tracking_on_start: true,
            tip_home: Pose::identity(),
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> anyhow::Result<()> {
        self.control.validate()?;
        self.sim.validate()?;
        if !(self.input_rate > 0.0 && self.input_rate.is_finite()) {
            bail!("input_rate must be positive");
        }
        if !(self.broadcast_rate > 0.0 && self.broadcast_rate <= self.input_rate) {
            bail!("broadcast_rate must be positive and not exceed input_rate");
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        let cfg: Self = serde_json::from_str(text).context("parsing session config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::from_json(&text)
    }

    /// Explicit path, else `$GLOVELINK_CONFIG`, else defaults.
    pub fn resolve(explicit: Option<&Path>) -> anyhow::Result<Self> {
        let env = std::env::var_os(CONFIG_ENV).filter(|v| !v.is_empty()).map(PathBuf::from);
        match explicit.map(Path::to_path_buf).or(env) {
            Some(p) => Self::from_file(&p),
            None => Ok(Self::default()),
        }
    }

    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config is always serializable")
    }
}
