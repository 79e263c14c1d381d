//! Service configuration from a TOML file and/or environment variables.
//!
//! | variable                 | key               | default            |
//! |--------------------------|-------------------|--------------------|
//! | `RPTTE_CONFIG`           | (file path)       | none               |
//! | `RPTTE_DATASET_DIR`      | `dataset_dir`     | `data`             |
//! | `RPTTE_LISTEN`           | `listen`          | `127.0.0.1:8080`   |
//! | `RPTTE_CACHE_CAPACITY`   | `cache_capacity`  | `32`               |
//! | `RPTTE_STATIC_DIR`       | `static_dir`      | none               |
//! | `RPTTE_INCLUDE_VAT`      | `include_vat`     | `false`            |
//! | `RPTTE_COUNT_REVERSE`    | `count_reverse`   | `false`            |
//!
//! Environment variables override the file.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rptte_core::{Error, FeatureConfig, Result};
use serde::{Deserialize, Serialize};

pub const ENV_CONFIG: &str = "RPTTE_CONFIG";
pub const ENV_DATASET_DIR: &str = "RPTTE_DATASET_DIR";
pub const ENV_LISTEN: &str = "RPTTE_LISTEN";
pub const ENV_CACHE_CAPACITY: &str = "RPTTE_CACHE_CAPACITY";
pub const ENV_STATIC_DIR: &str = "RPTTE_STATIC_DIR";
pub const ENV_INCLUDE_VAT: &str = "RPTTE_INCLUDE_VAT";
pub const ENV_COUNT_REVERSE: &str = "RPTTE_COUNT_REVERSE";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub dataset_dir: PathBuf,
    pub listen: String,
    /// Completed runs kept in memory; older ones are recomputed on demand.
    pub cache_capacity: usize,
    /// Directory of a built UI bundle served at `/`.
    pub static_dir: Option<PathBuf>,
    pub include_vat: bool,
    pub count_reverse: bool,
    /// Chain lengths of the baseline run behind the daily summary when no
    /// `run_id` is given.
    pub summary_max_txn_chain: u32,
    pub summary_max_ctrl_chain: u32,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            dataset_dir: PathBuf::from("data"),
            listen: "127.0.0.1:8080".to_string(),
            cache_capacity: 32,
            static_dir: None,
            include_vat: false,
            count_reverse: false,
            summary_max_txn_chain: 4,
            summary_max_ctrl_chain: 2,
        }
    }
}

impl ServiceConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ServiceConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("service config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    /// Reads `RPTTE_CONFIG` (if set) and applies the other variables on top.
    pub fn from_env() -> Result<Self> {
        let vars: HashMap<String, String> = std::env::vars().collect();
        Self::from_vars(&vars)
    }

    pub fn from_vars(vars: &HashMap<String, String>) -> Result<Self> {
        let mut cfg = match vars.get(ENV_CONFIG) {
            Some(path) => Self::from_file(Path::new(path))?,
            None => ServiceConfig::default(),
        };
        cfg.apply_vars(vars)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply_vars(&mut self, vars: &HashMap<String, String>) -> Result<()> {
        if let Some(v) = vars.get(ENV_DATASET_DIR) {
            self.dataset_dir = PathBuf::from(v);
        }
        if let Some(v) = vars.get(ENV_LISTEN) {
            self.listen = v.clone();
        }
        if let Some(v) = vars.get(ENV_CACHE_CAPACITY) {
            self.cache_capacity = v
                .parse()
                .map_err(|_| Error::Config(format!("{ENV_CACHE_CAPACITY}: `{v}` is not a count")))?;
        }
        if let Some(v) = vars.get(ENV_STATIC_DIR) {
            self.static_dir = Some(PathBuf::from(v));
        }
        if let Some(v) = vars.get(ENV_INCLUDE_VAT) {
            self.include_vat = parse_bool(ENV_INCLUDE_VAT, v)?;
        }
        if let Some(v) = vars.get(ENV_COUNT_REVERSE) {
            self.count_reverse = parse_bool(ENV_COUNT_REVERSE, v)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.cache_capacity == 0 {
            return Err(Error::Config("cache_capacity must be >= 1".into()));
        }
        if self.summary_max_txn_chain == 0 || self.summary_max_ctrl_chain == 0 {
            return Err(Error::Config("summary chain lengths must be >= 1".into()));
        }
        Ok(())
    }

    pub fn features(&self) -> FeatureConfig {
        FeatureConfig {
            include_vat: self.include_vat,
            count_reverse: self.count_reverse,
        }
    }
}

fn parse_bool(name: &str, v: &str) -> Result<bool> {
    match v.to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("{name}: `{v}` is not a boolean"))),
    }
}
