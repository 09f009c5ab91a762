//! Experiment configuration, read from a single JSON file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use suot_core::barycenter::{BoxPolicy, Method, Mode, OptimConfig};

use crate::error::{HarnessError, Result};
use crate::formats::{read_json, MatrixJson};

/// The τ values swept by `ablate-tau` unless the config overrides them.
pub const TAU_GRID: [f64; 11] = [0.005, 0.01, 0.02, 0.05, 0.1, 0.5, 1.0, 5.0, 10.0, 50.0, 100.0];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// n sampled covariances in dimension d.
    #[default]
    Random,
    /// The fixed pair of rotated 2-D Gaussians used for the contamination demo.
    Demo2d,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Init {
    #[default]
    Identity,
    /// Arithmetic mean of the input covariances.
    Mean,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSpec {
    pub method: Method,
    pub eta: f64,
}

/// Members listed in `members` become (1 − weight)·Σ + weight·outlier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Contamination {
    pub outlier: MatrixJson,
    pub weight: f64,
    #[serde(default = "first_member")]
    pub members: Vec<usize>,
}

fn first_member() -> Vec<usize> {
    vec![0]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub profile: Profile,
    pub d: usize,
    pub n: usize,
    /// Spread passed to the SPD sampler.
    pub sigma: f64,
    /// Sample diagonal covariances.
    pub diagonal: bool,
    pub tau: f64,
    pub tau_grid: Vec<f64>,
    pub optimizers: Vec<OptimizerSpec>,
    pub max_iters: usize,
    pub tol: f64,
    pub rho: Option<f64>,
    pub box_policy: BoxPolicy,
    pub mode: Mode,
    pub momentum: f64,
    pub init: Init,
    pub contamination: Option<Contamination>,
    pub out_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: "suot".into(),
            profile: Profile::Random,
            d: 5,
            n: 20,
            sigma: 0.5,
            diagonal: true,
            tau: 1.0,
            tau_grid: TAU_GRID.to_vec(),
            optimizers: vec![
                OptimizerSpec { method: Method::Exact, eta: 0.1 },
                OptimizerSpec { method: Method::Exact, eta: 0.2 },
                OptimizerSpec { method: Method::Exact, eta: 0.5 },
                OptimizerSpec { method: Method::Hybrid, eta: 1.0 },
            ],
            max_iters: 500,
            tol: 1e-8,
            rho: None,
            box_policy: BoxPolicy::Warn,
            mode: Mode::Deterministic,
            momentum: 0.0,
            init: Init::Identity,
            contamination: None,
            out_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        read_json(path).map_err(|e| match e {
            HarnessError::Json { path, source } => {
                HarnessError::Config(format!("{}: {source}", path.display()))
            }
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        if self.d == 0 || self.n == 0 {
            return bad(format!("d and n must be positive, got d = {}, n = {}", self.d, self.n));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma must be positive, got {}", self.sigma));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad(format!("tau must be positive, got {}", self.tau));
        }
        if self.tau_grid.is_empty() || self.tau_grid.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return bad("tau_grid must be a nonempty list of positive values".into());
        }
        if self.optimizers.is_empty() {
            return bad("optimizers must not be empty".into());
        }
        for spec in &self.optimizers {
            self.optim_config(spec.eta)
                .validate()
                .or_else(|e| bad(format!("{}: {e}", spec.method.name())))?;
        }
        if let Some(c) = &self.contamination {
            if !(0.0..=1.0).contains(&c.weight) {
                return bad(format!("contamination weight must lie in [0, 1], got {}", c.weight));
            }
            let outlier = c
                .outlier
                .to_spd()
                .map_err(|e| HarnessError::Config(format!("contamination outlier: {e}")))?;
            let (d, n) = self.corpus_shape();
            if outlier.dim() != d {
                return bad(format!("contamination outlier has dimension {}, corpus has {d}", outlier.dim()));
            }
            if let Some(m) = c.members.iter().find(|&&m| m >= n) {
                return bad(format!("contamination member {m} out of range for n = {n}"));
            }
        }
        Ok(())
    }

    /// (d, n) of the generated corpus; the demo profile is always two 2-D measures.
    pub fn corpus_shape(&self) -> (usize, usize) {
        match self.profile {
            Profile::Random => (self.d, self.n),
            Profile::Demo2d => (2, 2),
        }
    }

    pub fn optim_config(&self, eta: f64) -> OptimConfig {
        OptimConfig {
            eta,
            max_iters: self.max_iters,
            tol: self.tol,
            rho: self.rho,
            box_policy: self.box_policy,
            mode: self.mode,
            momentum: self.momentum,
            ..OptimConfig::default()
        }
    }

    /// Deterministic methods are swapped for their stochastic variants in stochastic mode.
    pub fn effective_method(&self, method: Method) -> Method {
        match (self.mode, method) {
            (Mode::Stochastic, Method::Exact) => Method::ExactSgd,
            (Mode::Stochastic, Method::Hybrid) => Method::HybridSgd,
            _ => method,
        }
    }
}
