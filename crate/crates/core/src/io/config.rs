use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{io_err, IoError};
use crate::model::{Mode, ModelConfig};
use crate::pde_zoo::PdeFamily;
use crate::train_eval::{StudySettings, SymbolInput, TrainConfig, BASE_FAMILIES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    #[default]
    Desk,
    Paper,
}

impl FromStr for Preset {
    type Err = IoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "desk" => Ok(Preset::Desk),
            "paper" => Ok(Preset::Paper),
            _ => Err(IoError::Config(format!("unknown preset '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub families: Vec<PdeFamily>,
    /// Instances per family.
    pub n_train: usize,
    pub n_test: usize,
    /// Input noise relative to each trajectory's standard deviation.
    pub noise: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            families: BASE_FAMILIES.to_vec(),
            n_train: 1000,
            n_test: 200,
            noise: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudySection {
    /// Rollout end times.
    pub t_end: Vec<f64>,
    pub oracle_rollout: bool,
    /// ICs per operator pair in the similarity baseline.
    pub n_similarity: usize,
    pub eval_batch: usize,
    pub decode: bool,
}

impl Default for StudySection {
    fn default() -> Self {
        StudySection {
            t_end: vec![2.25, 2.5, 3.0],
            oracle_rollout: false,
            n_similarity: 50,
            eval_batch: 32,
            decode: true,
        }
    }
}

/// Everything a run needs. Optimizer and loss defaults follow the reference
/// hyperparameters (lr 1e-4, wd 1e-4, cosine with 10% warmup, clip 1, α = 5,
/// β = 1); `RunConfig::for_preset(Preset::Desk)` raises the lr to 1e-3.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub preset: Preset,
    pub mode: Mode,
    pub seed: u64,
    pub symbols: SymbolInput,
    pub data: DataSection,
    pub train: TrainConfig,
    pub study: StudySection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            preset: Preset::Desk,
            mode: Mode::TwoToTwo,
            seed: 0,
            symbols: SymbolInput::Skeleton,
            data: DataSection::default(),
            train: TrainConfig::default(),
            study: StudySection::default(),
        }
    }
}

impl RunConfig {
    pub fn for_preset(preset: Preset) -> Self {
        let train = match preset {
            Preset::Desk => TrainConfig::desk(),
            Preset::Paper => TrainConfig {
                batch_size: 512,
                steps: 60_000,
                ..TrainConfig::default()
            },
        };
        RunConfig {
            preset,
            train,
            ..Default::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, IoError> {
        let c: RunConfig = toml::from_str(text).map_err(|e| IoError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, IoError> {
        Self::from_toml(&std::fs::read_to_string(path).map_err(io_err(path))?)
    }

    pub fn to_toml(&self) -> Result<String, IoError> {
        toml::to_string(self).map_err(|e| IoError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), IoError> {
        self.train.weights.validate()?;
        if self.data.families.is_empty() {
            return Err(IoError::Config("no families".into()));
        }
        if !(1..=crate::pde_zoo::N_INPUT_STAMPS).contains(&self.train.n_in) {
            return Err(IoError::Config(format!("n_in {} outside 1..=16", self.train.n_in)));
        }
        self.model().validate()?;
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn model(&self) -> ModelConfig {
        match self.preset {
            Preset::Desk => ModelConfig::desk(self.mode),
            Preset::Paper => ModelConfig::paper(self.mode),
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            symbols: self.symbols,
            ..self.train.clone()
        }
    }

    pub fn study_settings(&self) -> StudySettings {
        StudySettings {
            model: self.model(),
            train: self.train_config(),
            n_train: self.data.n_train,
            n_test: self.data.n_test,
            seed: self.seed,
            noise: self.data.noise,
            n_similarity: self.study.n_similarity,
            eval_batch: self.study.eval_batch,
        }
    }
}
