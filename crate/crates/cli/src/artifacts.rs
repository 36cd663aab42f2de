//! Output directories and the files written into them.

use std::fs;
use std::path::{Path, PathBuf};

use inforank::click::ClickLog;
use inforank::data::Dataset;
use inforank::pipeline::{Prepared, TrainerKind};
use inforank::training::aggregate_impressions;
use inforank::{Error, Result};

use crate::config::{ExperimentConfig, Manifest, MANIFEST_FILE, MANIFEST_FORMAT, MANIFEST_VERSION};

pub struct OutDir {
    pub path: PathBuf,
    written: Vec<String>,
}

impl OutDir {
    /// Creates `path`, refusing a non-empty directory unless `force`.
    pub fn create(path: &Path, force: bool) -> Result<Self> {
        if path.exists() {
            let non_empty = fs::read_dir(path).map_err(|e| io(path, e))?.next().is_some();
            if non_empty && !force {
                return Err(Error::Config(format!(
                    "output directory {} is not empty; pass --force to overwrite",
                    path.display()
                )));
            }
        }
        fs::create_dir_all(path).map_err(|e| io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn file(&mut self, name: &str) -> PathBuf {
        self.written.push(name.to_string());
        self.path.join(name)
    }

    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let p = self.file(name);
        fs::write(&p, contents).map_err(|e| io(&p, e))
    }

    pub fn write_json<T: serde::Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text)
    }

    pub fn finish(
        mut self,
        command: &str,
        config: &ExperimentConfig,
        trainer: Option<TrainerKind>,
        eta: Option<f64>,
        inputs: Vec<PathBuf>,
    ) -> Result<()> {
        self.written.sort();
        self.written.dedup();
        let m = Manifest {
            format: MANIFEST_FORMAT.into(),
            version: MANIFEST_VERSION,
            command: command.into(),
            seeds: config.seeds.clone(),
            trainer,
            eta,
            inputs,
            config_hash: config.hash(),
            config: config.clone(),
            outputs: std::mem::take(&mut self.written),
        };
        self.write_json(MANIFEST_FILE, &m)
    }
}

fn io(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn split_file(split: &str) -> String {
    format!("{split}.json")
}

pub fn log_file(split: &str) -> String {
    format!("clicks_{split}.jsonl")
}

pub const RANKER_FILE: &str = "ranker.json";

/// Reads the split datasets, logging ranker and click logs written by
/// `simulate`.
pub fn load_prepared(dir: &Path) -> Result<Prepared> {
    let ds = |s: &str| Dataset::load_cache(&dir.join(split_file(s)));
    let log = |s: &str| ClickLog::load(&dir.join(log_file(s)));
    let ranker_path = dir.join(RANKER_FILE);
    let ranker_text = fs::read_to_string(&ranker_path).map_err(|e| io(&ranker_path, e))?;
    let (train_log, validation_log, test_log) = (log("train")?, log("validation")?, log("test")?);
    Ok(Prepared {
        train: ds("train")?,
        validation: ds("validation")?,
        test: ds("test")?,
        ranker: serde_json::from_str(&ranker_text)?,
        train_examples: aggregate_impressions(&train_log.records)?,
        validation_examples: aggregate_impressions(&validation_log.records)?,
        test_examples: aggregate_impressions(&test_log.records)?,
        train_log,
        validation_log,
        test_log,
    })
}

pub fn checkpoint_name(trainer: TrainerKind, seed: u64) -> String {
    format!("{}-seed{seed}", trainer.name())
}

/// Inverse of [`checkpoint_name`].
pub fn parse_checkpoint_name(stem: &str) -> Option<(TrainerKind, u64)> {
    let (t, s) = stem.rsplit_once("-seed")?;
    Some((TrainerKind::parse(t).ok()?, s.parse().ok()?))
}

pub const CHECKPOINT_SUFFIX: &str = ".checkpoint.json";

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_names_round_trip() {
        for t in TrainerKind::ALL {
            assert_eq!(parse_checkpoint_name(&checkpoint_name(t, 12)), Some((t, 12)));
        }
        assert_eq!(parse_checkpoint_name("bogus-seed1"), None);
        assert_eq!(parse_checkpoint_name("click-seedx"), None);
    }

    #[test]
    fn refuses_non_empty_directory() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("x"), "1").unwrap();
        assert!(OutDir::create(dir.path(), false).is_err());
        assert!(OutDir::create(dir.path(), true).is_ok());
        assert!(OutDir::create(&dir.path().join("new"), false).is_ok());
    }
}
