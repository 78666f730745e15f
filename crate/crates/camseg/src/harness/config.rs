//! Experiment configuration: a versioned TOML file naming the dataset
//! source, the architectures to run, and the training hyperparameters.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::SynthConfig;
use crate::nn::{NetworkSpec, TrainConfig};

use super::HarnessError;

pub const CONFIG_VERSION: u32 = 1;

/// Synthetic-dataset knobs as they appear in a config file. The dataset
/// seed is not among them: it always derives from the run's master seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthParams {
    pub per_class: usize,
    pub roi_size: usize,
    pub blob_min: f64,
    pub blob_max: f64,
    pub texture: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        let base = SynthConfig::default();
        Self {
            per_class: base.per_class,
            roi_size: base.roi_size,
            blob_min: base.blob_min,
            blob_max: base.blob_max,
            texture: base.texture,
        }
    }
}

impl SynthParams {
    pub fn with_seed(&self, seed: u64) -> SynthConfig {
        SynthConfig {
            per_class: self.per_class,
            roi_size: self.roi_size,
            blob_min: self.blob_min,
            blob_max: self.blob_max,
            texture: self.texture,
            seed,
        }
    }
}

/// Where the samples come from: generated on the fly, or an existing
/// manifest directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSource {
    Synthetic(SynthParams),
    Manifest { path: PathBuf },
}

impl Default for DatasetSource {
    fn default() -> Self {
        DatasetSource::Synthetic(SynthParams::default())
    }
}

/// Everything an experiment run needs, loadable from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    /// Master seed; dataset generation, splits, shuffles, borrowed-mask
    /// draws, and retrain seeds all derive from it.
    pub seed: u64,
    /// Output directory; a CLI `--out` flag takes precedence.
    pub out: Option<PathBuf>,
    /// Architecture preset names, trained in order.
    pub architectures: Vec<String>,
    /// Clamp negative CAM cells to zero before resizing.
    pub rectified_cam: bool,
    /// Also retrain on inverse-mask-filtered ROIs in the second experiment.
    pub run_inverse_ablation: bool,
    pub dataset: DatasetSource,
    pub train: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            seed: 7,
            out: None,
            architectures: vec!["gap-head-small".into(), "deep-head-small".into()],
            rectified_cam: false,
            run_inverse_ablation: true,
            dataset: DatasetSource::default(),
            train: TrainConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |why: String| Err(HarnessError::Config(why));
        if self.version != CONFIG_VERSION {
            return bad(format!(
                "unsupported config version {} (this build reads {})",
                self.version, CONFIG_VERSION
            ));
        }
        if self.architectures.is_empty() {
            return bad("at least one architecture is required".into());
        }
        for arch in &self.architectures {
            // Existence check only; the real input size is bound at run time.
            NetworkSpec::preset(arch, 64)
                .map_err(|e| HarnessError::Config(e.to_string()))?;
        }
        self.train
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        if let DatasetSource::Synthetic(params) = &self.dataset {
            params
                .with_seed(self.seed)
                .validate()
                .map_err(|e| HarnessError::Config(e.to_string()))?;
        }
        Ok(())
    }
}

/// Reads and validates a TOML config file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, HarnessError> {
    let text = fs::read_to_string(path)?;
    let config: ExperimentConfig = toml::from_str(&text)
        .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
    config.validate()?;
    Ok(config)
}
