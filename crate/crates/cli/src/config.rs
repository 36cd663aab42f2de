//! Experiment configuration and manifests.

use std::fs;
use std::path::{Path, PathBuf};

use inforank::data::{load_sparse_text, FeatureSchema, SynthConfig};
use inforank::pipeline::{ClickSection, ModelSection, RunConfig, SplitSection, TrainerKind};
use inforank::training::TrainConfig;
use inforank::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FORMAT: &str = "inforank-manifest";
pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

/// Sparse-text input used instead of the synthetic generator.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub path: Option<PathBuf>,
    /// Number of real-valued item features per line.
    pub n_features: usize,
    pub y_max: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub bias_degrees: Vec<f64>,
    pub etas: Vec<f64>,
    pub fractions: Vec<f64>,
    pub frequency_buckets: usize,
    pub top_k: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            bias_degrees: vec![0.0, 0.5, 1.0, 1.5, 2.0],
            etas: vec![0.0, 0.2, 0.5, 1.0],
            fractions: vec![0.2, 0.4, 0.6, 0.8, 1.0],
            frequency_buckets: 10,
            top_k: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seeds: Vec<u64>,
    pub trainers: Vec<TrainerKind>,
    pub output_dir: Option<PathBuf>,
    pub dataset: DatasetSection,
    pub data: SynthConfig,
    pub split: SplitSection,
    pub clicks: ClickSection,
    pub model: ModelSection,
    pub training: TrainConfig,
    pub eval: EvalSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let run = RunConfig::default();
        Self {
            seeds: vec![0],
            trainers: TrainerKind::ALL.to_vec(),
            output_dir: None,
            dataset: DatasetSection::default(),
            data: run.data,
            split: run.split,
            clicks: run.clicks,
            model: run.model,
            training: run.training,
            eval: EvalSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn run_config(&self) -> RunConfig {
        RunConfig {
            data: self.data.clone(),
            split: self.split.clone(),
            clicks: self.clicks.clone(),
            model: self.model.clone(),
            training: self.training.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.trainers.is_empty() {
            return Err(Error::Config("at least one trainer is required".into()));
        }
        if let Some(p) = &self.dataset.path {
            if !p.is_file() {
                return Err(Error::Config(format!("dataset file {} does not exist", p.display())));
            }
            if self.dataset.n_features == 0 {
                return Err(Error::Config("dataset.n_features must be >= 1".into()));
            }
        }
        if self.eval.frequency_buckets == 0 || self.eval.top_k == 0 {
            return Err(Error::Config(
                "eval.frequency_buckets and eval.top_k must be >= 1".into(),
            ));
        }
        self.run_config().validate()
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }

    /// Labeled dataset: the sparse-text file when configured, the synthetic
    /// generator otherwise.
    pub fn load_dataset(&self, seed: u64) -> Result<inforank::data::Dataset> {
        match &self.dataset.path {
            Some(p) => {
                let mut ds = load_sparse_text(p, &FeatureSchema::all_real(self.dataset.n_features))?;
                if let Some(y) = self.dataset.y_max {
                    ds.y_max = y;
                }
                ds.validate()?;
                Ok(ds)
            }
            None => inforank::data::generate_synthetic(
                &self.data,
                inforank::pipeline::derive_seed(seed, inforank::pipeline::STAGE_DATA),
            ),
        }
    }
}

/// Record written next to every artifact set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub command: String,
    pub seeds: Vec<u64>,
    pub trainer: Option<TrainerKind>,
    pub eta: Option<f64>,
    pub inputs: Vec<PathBuf>,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub outputs: Vec<String>,
}

/// Reads a TOML config, or the config echoed in a manifest when the path
/// ends in `.json`.
pub fn load_config(path: &Path) -> Result<(ExperimentConfig, Option<Manifest>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    if path.extension().is_some_and(|e| e == "json") {
        let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if m.format != MANIFEST_FORMAT || m.version != MANIFEST_VERSION {
            return Err(Error::Config(format!(
                "{} is not a version {MANIFEST_VERSION} manifest",
                path.display()
            )));
        }
        if m.config.hash() != m.config_hash {
            return Err(Error::Config(format!(
                "{}: config hash does not match its config",
                path.display()
            )));
        }
        return Ok((m.config.clone(), Some(m)));
    }
    let cfg: ExperimentConfig = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    Ok((cfg, None))
}
