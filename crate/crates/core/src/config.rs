//! Run configuration loaded from TOML.
//!
//! Every section is optional and falls back to the experiment defaults.
//! Command-line flags are applied on top with the `override_*` helpers.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::actors::MarketConfig;
use crate::economics::EconParams;
use crate::harness::experiment1::Experiment1Config;
use crate::harness::experiment2::Experiment2Config;
use crate::harness::HarnessError;

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub out_dir: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub sizes: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Shared economics; copied into both experiments unless they set their own.
    pub economics: Option<EconParams>,
    pub contract: MarketConfig,
    pub experiment1: Experiment1Config,
    pub experiment2: Experiment2Config,
    pub run: RunSection,
    pub paths: PathsSection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let mut cfg: RunConfig =
            toml::from_str(text).map_err(|e| HarnessError::Parse { what: "run config".into(), reason: e.to_string() })?;
        if let Some(p) = &cfg.economics {
            cfg.experiment1.params = p.clone();
            cfg.experiment2.params = p.clone();
        }
        if let Some(seed) = cfg.run.seed {
            cfg.contract.seed = seed;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Directory for outputs: flag, then environment, then file, then `.`.
    pub fn out_dir(&self, flag: Option<&Path>, env: Option<&str>) -> PathBuf {
        flag.map(Path::to_path_buf)
            .or_else(|| env.filter(|s| !s.is_empty()).map(PathBuf::from))
            .or_else(|| self.paths.out_dir.clone())
            .unwrap_or_else(|| PathBuf::from("."))
    }

    pub fn override_csps(&mut self, csps: Option<usize>) {
        if let Some(c) = csps {
            self.experiment2.csps = c;
        }
    }
}
