use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{Dims, PlantedRule, SynthConfig};
use crate::error::{io_err, CoreError, Result};
use crate::prune::Discretizer;
use crate::search::SearchSpace;
use crate::train::TrainConfig;

/// Dataset section: a synthetic generator, or a saved dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub rule: PlantedRule,
    pub train: usize,
    pub validation: usize,
    pub test: usize,
    pub classes: usize,
    pub noise: f64,
    pub prevalence: f64,
    /// Load this dataset instead of generating one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    pub dims: Dims,
}

impl Default for DataConfig {
    fn default() -> Self {
        let s = SynthConfig::new(PlantedRule::TemporalCross, 0);
        Self {
            rule: s.rule,
            train: s.train,
            validation: s.validation,
            test: s.test,
            classes: s.classes,
            noise: s.noise,
            prevalence: s.prevalence,
            path: None,
            dims: s.dims,
        }
    }
}

impl DataConfig {
    pub fn synth(&self, seed: u64) -> SynthConfig {
        SynthConfig {
            train: self.train,
            validation: self.validation,
            test: self.test,
            dims: self.dims,
            classes: self.classes,
            rule: self.rule,
            noise: self.noise,
            prevalence: self.prevalence,
            seed,
        }
    }
}

/// Which seeds to run, how to discretize and where artifacts go. Not part
/// of the config hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seeds: Vec<u64>,
    pub discretizer: Discretizer,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seeds: vec![0],
            discretizer: Discretizer::Prune,
            out: PathBuf::from("runs"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub search: SearchSpace,
    pub train: TrainConfig,
    pub run: RunConfig,
}

#[derive(Serialize)]
struct Hashed<'a> {
    data: &'a DataConfig,
    search: &'a SearchSpace,
    train: &'a TrainConfig,
}

/// Length of the hex config hash.
pub const HASH_LEN: usize = 16;

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| CoreError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_toml(&text)
    }

    /// Resolved config with every default filled in.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| CoreError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.path.is_none() {
            self.data.synth(0).validate()?;
        }
        self.search.validate()?;
        self.train.validate()?;
        if self.run.seeds.is_empty() {
            return Err(CoreError::Config("run.seeds must not be empty".into()));
        }
        Ok(())
    }

    /// Hex prefix of the SHA-256 of the data, search and train sections.
    /// Seeds, discretizer and output directory do not enter the hash, so
    /// all of them share one run directory.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(&Hashed {
            data: &self.data,
            search: &self.search,
            train: &self.train,
        })
        .expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        hex::encode(digest)[..HASH_LEN].to_string()
    }

    pub fn run_dir(&self) -> PathBuf {
        self.run.out.join(self.hash())
    }
}
