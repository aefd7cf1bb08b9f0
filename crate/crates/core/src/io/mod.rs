//! Dataset ingestion, configuration files and report emission.

mod config;
mod json;
mod units;

pub use config::{load_config, parse_config, ConfigFile, DataOptions, RunConfig, CONFIG_VERSION};
pub use json::{format_f64, to_json_string, write_json, Report};
pub use units::{emit_unit_csv, parse_unit_csv, parse_unit_csv_str, write_csv, write_unit_csv};

use crate::error::{Error, Result};

pub(crate) fn read_to_string(path: &std::path::Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.display().to_string(), source })
}

pub(crate) fn write_string(path: &std::path::Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.display().to_string(), source })?;
    }
    std::fs::write(path, text).map_err(|source| Error::Io { path: path.display().to_string(), source })
}
