use std::fs;
use std::path::{Path, PathBuf};

use jaca::select::{default_epsilon_grid, default_rho_grid};
use jaca::{CVConfig, SimulationConfig};
use serde::Deserialize;

use crate::failure::Failure;

fn default_alpha() -> f64 {
    0.5
}
fn default_folds() -> usize {
    5
}
fn default_tol() -> f64 {
    1e-8
}
fn default_max_iter() -> usize {
    1000
}

/// Settings shared by `fit` and `cv`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub rho: Option<f64>,
    pub rho_grid: Option<Vec<f64>>,
    pub epsilon: Option<f64>,
    pub epsilon_grid: Option<Vec<f64>>,
    #[serde(default = "default_folds")]
    pub n_folds: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub semi_supervised: bool,
    pub views: Vec<PathBuf>,
    pub labels: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn parse<T: for<'de> Deserialize<'de>>(path: &Path, text: &str) -> Result<T, Failure> {
    serde_json::from_str(text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl RunConfig {
    /// Reads and validates a config; relative paths are taken from the
    /// config file's directory.
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let mut cfg: RunConfig = parse(path, &read_text(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.views = cfg.views.iter().map(|v| resolve(base, v)).collect();
        cfg.labels = cfg.labels.as_deref().map(|l| resolve(base, l));
        cfg.output_dir = cfg.output_dir.as_deref().map(|o| resolve(base, o));
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), Failure> {
        let usage = |m: &str| Err(Failure::Usage(m.to_string()));
        if self.rho.is_some() && self.rho_grid.is_some() {
            return usage("give either `rho` or `rho_grid`, not both");
        }
        if self.epsilon.is_some() && self.epsilon_grid.is_some() {
            return usage("give either `epsilon` or `epsilon_grid`, not both");
        }
        if self.views.len() < 2 {
            return usage("`views` must list at least two CSV files");
        }
        if self.labels.is_none() {
            return usage("`labels` is required");
        }
        self.cv_config().validate().map_err(|e| Failure::Usage(e.to_string()))
    }

    /// Both `rho` and `epsilon` fixed, so no search is needed.
    pub fn is_fixed(&self) -> bool {
        self.rho.is_some() && self.epsilon.is_some()
    }

    pub fn cv_config(&self) -> CVConfig<f64> {
        let mut rho = match (&self.rho, &self.rho_grid) {
            (Some(r), _) => vec![*r],
            (None, Some(g)) => g.clone(),
            (None, None) => default_rho_grid(),
        };
        let mut eps = match (&self.epsilon, &self.epsilon_grid) {
            (Some(e), _) => vec![*e],
            (None, Some(g)) => g.clone(),
            (None, None) => default_epsilon_grid(),
        };
        rho.sort_by(f64::total_cmp);
        rho.dedup();
        eps.sort_by(|a, b| b.total_cmp(a));
        eps.dedup();
        CVConfig {
            n_folds: self.n_folds,
            rho_grid: rho,
            epsilon_grid: eps,
            alpha: self.alpha,
            seed: self.seed,
            tol: self.tol,
            max_iter: self.max_iter,
        }
    }
}

pub fn load_simulation(path: &Path) -> Result<SimulationConfig, Failure> {
    let cfg: SimulationConfig = parse(path, &read_text(path)?)?;
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(cfg)
}
