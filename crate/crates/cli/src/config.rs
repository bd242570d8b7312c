//! Run configuration: one JSON document, every field optional, unknown
//! keys rejected. Command-line flags are applied on top afterwards.

use std::path::Path;

use anyhow::{bail, Context, Result};
use nlmesel::pso::PsoConfig;
use nlmesel::sapg::{Lambda, SapgConfig};
use nlmesel::{IsConfig, SimScenario};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Root seed for every algorithmic random stream. Required by `fit`,
    /// `select` and `eval-bic`.
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub sapg: SapgConfig,
    pub pso: PsoConfig,
    pub is: IsConfig,
    /// Scenario used by `simulate`, and by the other commands when no data
    /// file is given.
    pub sim: SimScenario,
    pub init: InitConfig,
    /// Penalty for `fit`.
    pub lambda: Lambda,
    pub grid: GridConfig,
    /// Number of simulated datasets `select` runs on (simulated data only).
    pub replicates: usize,
    pub standardize_covariates: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            threads: None,
            sapg: SapgConfig::default(),
            pso: PsoConfig::default(),
            is: IsConfig::default(),
            sim: SimScenario::default(),
            init: InitConfig::default(),
            lambda: Lambda::zero(),
            grid: GridConfig::default(),
            replicates: 1,
            standardize_covariates: false,
        }
    }
}

/// Starting point of every cold SAPG run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitConfig {
    /// Log-scale intercepts; a noncompartmental guess from the data when unset.
    pub mu: Option<Vec<f64>>,
    pub delta0: f64,
    /// Residual SD; a quarter of the observation SD when unset.
    pub sigma0: Option<f64>,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            mu: None,
            delta0: 1.0,
            sigma0: None,
        }
    }
}

/// Grid for `select --mode grid`. Explicit `points` win; otherwise a
/// log-spaced `n_beta x n_gamma` grid from `lo_fraction * lambda_max` to
/// `lambda_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub points: Option<Vec<Lambda>>,
    pub n_beta: usize,
    pub n_gamma: usize,
    pub lo_fraction: f64,
    /// SAPG iterations per grid point; `sapg.n_iter` when unset.
    pub n_iter: Option<usize>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            points: None,
            n_beta: 10,
            n_gamma: 8,
            lo_fraction: 0.01,
            n_iter: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        self.sapg.validate()?;
        self.pso.validate()?;
        self.is.validate()?;
        self.lambda.validate()?;
        if !(self.init.delta0 > 0.0) {
            bail!("init.delta0 must be positive");
        }
        if let Some(s) = self.init.sigma0 {
            if !(s > 0.0) {
                bail!("init.sigma0 must be positive");
            }
        }
        if self.replicates == 0 {
            bail!("replicates must be at least 1");
        }
        if self.threads == Some(0) {
            bail!("threads must be at least 1");
        }
        let g = &self.grid;
        if g.points.is_none() && (g.n_beta == 0 || g.n_gamma == 0 || !(g.lo_fraction > 0.0 && g.lo_fraction < 1.0)) {
            bail!("grid needs n_beta, n_gamma >= 1 and lo_fraction in (0, 1)");
        }
        Ok(())
    }

    pub fn require_seed(&self) -> Result<u64> {
        match self.seed {
            Some(s) => Ok(s),
            None => bail!("a seed is required (config `seed` or --seed)"),
        }
    }
}
