use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::read_to_string;
use crate::error::{invalid, Result};
use crate::model::{ConstraintSet, OutcomeKind};

pub const CONFIG_VERSION: u32 = 1;

/// Hints for reading the unit CSV.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataOptions {
    /// Force the outcome reading; by default `0`/`1` tokens mean binary.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<OutcomeKind>,
    /// Covariates read as categorical even when every value is numeric.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub categorical: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default = "default_version")]
    pub version: u32,
    #[serde(default)]
    pub constraints: ConstraintSet,
    #[serde(default)]
    pub data: DataOptions,
}

fn default_version() -> u32 {
    CONFIG_VERSION
}

impl Default for ConfigFile {
    fn default() -> Self {
        ConfigFile { version: CONFIG_VERSION, constraints: ConstraintSet::default(), data: DataOptions::default() }
    }
}

pub fn parse_config(text: &str) -> Result<ConfigFile> {
    let cfg: ConfigFile = serde_json::from_str(text)?;
    if cfg.version != CONFIG_VERSION {
        return invalid(format!("config version {} is not supported (expected {CONFIG_VERSION})", cfg.version));
    }
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ConfigFile> {
    parse_config(&read_to_string(path)?).map_err(|e| match e {
        crate::Error::Json(j) => crate::Error::Invalid(format!("{}: {j}", path.display())),
        other => other,
    })
}

/// Everything needed to rerun a command; embedded in every report.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: String,
    pub version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<String>,
    /// Resolved configuration file contents.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_contents: Option<ConfigFile>,
    /// Test parameters as given on the command line.
    #[serde(default)]
    pub params: BTreeMap<String, serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
    pub seed: Option<u64>,
    pub node_limit: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_limit_secs: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}
