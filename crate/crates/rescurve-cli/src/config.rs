//! Layered run configuration: command-line flags override config-file
//! values, which override built-in defaults.

use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use rescurve::{Error, Result};
use serde::Deserialize;

/// Optional values read from a TOML config file. Every field mirrors a
/// command-line flag; absent fields fall back to the defaults below.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub schema: Option<String>,
    pub grid_start: Option<String>,
    pub grid_step_seconds: Option<u64>,
    pub n_steps: Option<usize>,
    pub max_missing_ratio: Option<f64>,
    pub min_peak: Option<f64>,
    pub k_min: Option<usize>,
    pub k_max: Option<usize>,
    pub seed: Option<u64>,
    pub restarts: Option<usize>,
    pub eps_grad: Option<f64>,
    pub pc_peak_threshold: Option<f64>,
    pub plateau_tol: Option<f64>,
    pub min_plateau: Option<usize>,
    pub eps_rec: Option<f64>,
    pub out_dir: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read config file {}: {e}", path.display()))
        })?;
        toml::from_str(&text)
            .map_err(|e| Error::Config(format!("bad config file {}: {e}", path.display())))
    }
}

/// Pick the first present value: flag, then file, then default.
pub fn layered<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

/// Like [`layered`] but with no default; an absent value is a config error.
pub fn required<T>(flag: Option<T>, file: Option<T>, what: &str) -> Result<T> {
    flag.or(file)
        .ok_or_else(|| Error::Config(format!("{what} is required (flag or config file)")))
}

pub fn parse_grid_start(text: &str) -> Result<DateTime<Utc>> {
    text.parse::<DateTime<Utc>>()
        .map_err(|e| Error::Config(format!("bad grid start {text:?}: {e}")))
}

/// Archetype tolerances merged from the three layers, with range checks.
pub struct ArchetypeLayer {
    pub eps_grad: Option<f64>,
    pub pc_peak_threshold: Option<f64>,
    pub plateau_tol: Option<f64>,
    pub min_plateau: Option<usize>,
    pub eps_rec: Option<f64>,
}

impl ArchetypeLayer {
    pub fn merge(&self, file: &FileConfig) -> Result<rescurve::archetype::ArchetypeParams> {
        let defaults = rescurve::archetype::ArchetypeParams::default();
        let params = rescurve::archetype::ArchetypeParams {
            eps_grad: layered(self.eps_grad, file.eps_grad, defaults.eps_grad),
            pc_peak_threshold: layered(
                self.pc_peak_threshold,
                file.pc_peak_threshold,
                defaults.pc_peak_threshold,
            ),
            plateau_tol: layered(self.plateau_tol, file.plateau_tol, defaults.plateau_tol),
            min_plateau: layered(self.min_plateau, file.min_plateau, defaults.min_plateau),
            eps_rec: layered(self.eps_rec, file.eps_rec, defaults.eps_rec),
        };
        if !(params.eps_grad > 0.0 && params.eps_grad < 1.0) {
            return Err(Error::Config("eps_grad must be in (0, 1)".into()));
        }
        if params.pc_peak_threshold <= 0.0 {
            return Err(Error::Config("pc_peak_threshold must be positive".into()));
        }
        if !(params.plateau_tol > 0.0 && params.plateau_tol < 1.0) {
            return Err(Error::Config("plateau_tol must be in (0, 1)".into()));
        }
        if params.min_plateau < 1 {
            return Err(Error::Config("min_plateau must be at least 1".into()));
        }
        if !(params.eps_rec > 0.0 && params.eps_rec < 1.0) {
            return Err(Error::Config("eps_rec must be in (0, 1)".into()));
        }
        Ok(params)
    }
}
