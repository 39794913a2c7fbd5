//! TOML run configuration and its echo into output directories.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::{io_err, IoError};
use crate::estimator::EstimatorConfig;
use crate::sim::ScenarioConfig;

/// File name of the effective configuration written into every output directory.
pub const CONFIG_ECHO: &str = "config.toml";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    /// Tightly coupled factor-graph estimator.
    #[default]
    Tc,
    /// Epoch-wise single point positioning baseline.
    Spp,
}

impl fmt::Display for RunMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RunMode::Tc => "tc",
            RunMode::Spp => "spp",
        })
    }
}

impl FromStr for RunMode {
    type Err = IoError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tc" => Ok(RunMode::Tc),
            "spp" => Ok(RunMode::Spp),
            _ => Err(IoError::Config(format!(
                "unknown mode '{s}' (expected tc or spp)"
            ))),
        }
    }
}

/// Everything needed to reproduce a simulation or estimation run. Relative
/// paths are resolved against the directory of the file they were read from.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfigFile {
    pub mode: RunMode,
    /// Overrides `scenario.seed`.
    pub seed: Option<u64>,
    pub imu: Option<PathBuf>,
    pub gnss: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub scenario: Option<ScenarioConfig>,
    pub estimator: EstimatorConfig,
}

impl RunConfigFile {
    pub fn from_toml(text: &str) -> Result<Self, IoError> {
        let mut c: Self = toml::from_str(text).map_err(|e| IoError::Config(e.to_string()))?;
        c.apply_seed();
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, IoError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let mut c = Self::from_toml(&text).map_err(|e| e.in_file(path))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut c.imu, &mut c.gnss, &mut c.truth, &mut c.output]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(c)
    }

    /// Copies `seed` into the scenario.
    pub fn apply_seed(&mut self) {
        if let (Some(seed), Some(s)) = (self.seed, self.scenario.as_mut()) {
            s.seed = seed;
        }
    }

    pub fn validate(&self) -> Result<(), IoError> {
        self.estimator
            .validate()
            .map_err(|e| IoError::Config(e.to_string()))?;
        if let Some(s) = &self.scenario {
            s.validate().map_err(|e| IoError::Config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String, IoError> {
        toml::to_string(self).map_err(|e| IoError::Config(e.to_string()))
    }

    /// Writes the configuration with absolute paths to `dir/config.toml`.
    pub fn write_echo(&self, dir: &Path) -> Result<PathBuf, IoError> {
        let mut c = self.clone();
        for p in [&mut c.imu, &mut c.gnss, &mut c.truth, &mut c.output]
            .into_iter()
            .flatten()
        {
            *p = std::path::absolute(&*p).map_err(io_err(p))?;
        }
        let path = dir.join(CONFIG_ECHO);
        std::fs::write(&path, c.to_toml()?).map_err(io_err(&path))?;
        Ok(path)
    }
}
