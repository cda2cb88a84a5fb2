use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::report::CliError;
use crate::Common;

/// Keys accepted in a --config file; every one is optional.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub eps: Option<f64>,
    pub degree: Option<usize>,
    pub seed: Option<u64>,
    pub max_iters: Option<usize>,
    pub tol: Option<f64>,
    pub threshold: Option<f64>,
    pub k: Option<f64>,
    pub min_size: Option<usize>,
}

/// The effective settings echoed into every report.
#[derive(Clone, Debug, Serialize)]
pub struct Effective {
    pub eps: f64,
    pub degree: usize,
    pub seed: u64,
    pub max_iters: usize,
    pub tol: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_size: Option<usize>,
}

pub const DEFAULT_EPS: f64 = 0.25;
pub const DEFAULT_DEGREE: usize = 6;
pub const DEFAULT_MAX_ITERS: usize = 200;
pub const DEFAULT_TOL: f64 = 1e-7;

pub fn load(path: Option<&Path>) -> Result<FileConfig, CliError> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    toml::from_str(&text).map_err(|e| CliError::Format(format!("{}: {e}", path.display())))
}

impl Effective {
    /// flags, then the config file, then defaults
    pub fn resolve(common: &Common, file: &FileConfig) -> Effective {
        Effective {
            eps: common.eps.or(file.eps).unwrap_or(DEFAULT_EPS),
            degree: common.degree.or(file.degree).unwrap_or(DEFAULT_DEGREE),
            seed: common.seed.or(file.seed).unwrap_or(0),
            max_iters: common.max_iters.or(file.max_iters).unwrap_or(DEFAULT_MAX_ITERS),
            tol: common.tol.or(file.tol).unwrap_or(DEFAULT_TOL),
            threshold: None,
            k: None,
            min_size: None,
        }
    }
}
