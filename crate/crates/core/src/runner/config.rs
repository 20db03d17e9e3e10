use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::controller::{DEFAULT_CAPACITY, DEFAULT_INTERVAL, DEFAULT_MOMENTUM};
use crate::data::{gen_blobs, load_csv, BlobSpec, Dataset};
use crate::model::ModelDims;

use super::RunnerError;

/// Everything that determines a run. Serialised as TOML with one table per
/// section; omitted keys take their defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub controller: ControllerConfig,
    pub optimizer: OptimizerConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Read samples from this CSV instead of generating blobs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
    pub samples: usize,
    pub classes: usize,
    pub dim: usize,
    pub centroid_scale: f64,
    pub sigma: f64,
    /// Std of the additive noise that produces the second view.
    pub noise_sigma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden_dim: usize,
    pub feature_dim: usize,
    pub clusterings: usize,
    pub clusters: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    /// Similarity target `D^T`.
    pub target: f64,
    pub momentum: f64,
    pub capacity: usize,
    pub interval: u64,
    pub initial_bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub steps: u64,
    pub batch_size: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: PathBuf::from("runs/default"),
            data: DataConfig::default(),
            model: ModelConfig::default(),
            controller: ControllerConfig::default(),
            optimizer: OptimizerConfig::default(),
        }
    }
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { csv: None, samples: 2000, classes: 5, dim: 16, centroid_scale: 1.0, sigma: 0.5, noise_sigma: 0.1 }
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { hidden_dim: 32, feature_dim: 16, clusterings: 20, clusters: 5 }
    }
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            target: 0.9,
            momentum: DEFAULT_MOMENTUM,
            capacity: DEFAULT_CAPACITY,
            interval: DEFAULT_INTERVAL,
            initial_bound: 1.0,
        }
    }
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self { learning_rate: 0.05, steps: 3000, batch_size: 256 }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, RunnerError> {
        let text = std::fs::read_to_string(path).map_err(|e| RunnerError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, RunnerError> {
        let config: Self = toml::from_str(text).map_err(|e| RunnerError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn save(&self, path: &Path) -> Result<(), RunnerError> {
        std::fs::write(path, self.to_toml()).map_err(|e| RunnerError::io(path, e))
    }

    pub fn validate(&self) -> Result<(), RunnerError> {
        let bad = |msg: String| Err(RunnerError::Config(msg));
        let m = &self.model;
        if m.clusterings < 1 {
            return bad("model.clusterings must be at least 1".into());
        }
        if m.clusters < 2 {
            return bad("model.clusters must be at least 2".into());
        }
        let c = &self.controller;
        if !(0.0..=1.0).contains(&c.target) {
            return bad(format!("controller.target must lie in [0, 1], got {}", c.target));
        }
        if !(0.0..=1.0).contains(&c.initial_bound) {
            return bad(format!("controller.initial_bound must lie in [0, 1], got {}", c.initial_bound));
        }
        if !(c.momentum > 0.0 && c.momentum < 1.0) {
            return bad(format!("controller.momentum must lie in (0, 1), got {}", c.momentum));
        }
        if c.capacity == 0 || c.interval == 0 {
            return bad("controller.capacity and controller.interval must be positive".into());
        }
        let o = &self.optimizer;
        if !(o.learning_rate > 0.0 && o.learning_rate.is_finite()) {
            return bad(format!("optimizer.learning_rate must be positive, got {}", o.learning_rate));
        }
        if o.batch_size == 0 {
            return bad("optimizer.batch_size must be positive".into());
        }
        if !(self.data.noise_sigma >= 0.0) {
            return bad(format!("data.noise_sigma must be non-negative, got {}", self.data.noise_sigma));
        }
        Ok(())
    }

    pub fn blob_spec(&self) -> BlobSpec {
        let d = &self.data;
        BlobSpec { samples: d.samples, classes: d.classes, dim: d.dim, centroid_scale: d.centroid_scale, sigma: d.sigma }
    }

    /// The configured CSV, or blobs generated from the run seed.
    pub fn dataset(&self) -> Result<Dataset, RunnerError> {
        match &self.data.csv {
            Some(path) => Ok(load_csv(path)?),
            None => Ok(gen_blobs(self.seed, self.blob_spec())?),
        }
    }

    pub fn model_dims(&self, input_dim: usize) -> ModelDims {
        ModelDims {
            input_dim,
            hidden_dim: self.model.hidden_dim,
            feature_dim: self.model.feature_dim,
            clusterings: self.model.clusterings,
            clusters: self.model.clusters,
        }
    }
}
