use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::InferenceConfig;
use crate::model::Hyperparams;
use crate::simulator::SimulationConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub train_frac: f64,
    /// Number of held-out events scored by `predict`.
    pub horizon: usize,
    pub checkpoint_every: usize,
    pub grid_points: usize,
    pub top_words: usize,
    /// Independent replicas for seed sweeps.
    pub seeds: usize,
    pub bootstrap_resamples: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            train_frac: 0.8,
            horizon: 100,
            checkpoint_every: 1000,
            grid_points: 200,
            top_words: 10,
            seeds: 1,
            bootstrap_resamples: 2000,
        }
    }
}

/// Everything one experiment needs, read from a single JSON file. Missing
/// blocks take their defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub hyper: Hyperparams,
    pub simulation: SimulationConfig,
    pub inference: InferenceConfig,
    pub eval: EvalConfig,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        self.simulation.validate(&self.hyper)?;
        self.inference.validate()?;
        let e = &self.eval;
        if !(e.train_frac > 0.0 && e.train_frac < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "train_frac {} must lie in (0, 1)",
                e.train_frac
            )));
        }
        if e.seeds == 0 {
            return Err(Error::InvalidConfig("seeds must be at least 1".into()));
        }
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(s).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}
