//! Versioned scenario files (JSON or TOML).

use std::path::{Path, PathBuf};

use pdrlab::evalkit::ExperimentConfig;
use pdrlab::kalman::KfConfig;
use pdrlab::{ActivityKind, Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const SCHEMA_VERSION: u32 = 1;

fn walking() -> ActivityKind {
    ActivityKind::Walking
}

fn five() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredictSettings {
    /// Dropout passes per window; 0 gives deterministic predictions.
    pub mc_passes: usize,
    pub stride: usize,
}

impl Default for PredictSettings {
    fn default() -> Self {
        Self { mc_passes: 0, stride: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Must equal [`SCHEMA_VERSION`].
    pub version: u32,
    #[serde(default)]
    pub seed: u64,
    /// Activity simulated by `simulate`.
    #[serde(default = "walking")]
    pub activity: ActivityKind,
    /// Explicit experiment seeds; when empty, `n_seeds` consecutive seeds
    /// starting at `seed` are used.
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default = "five")]
    pub n_seeds: usize,
    #[serde(default)]
    pub experiment: ExperimentConfig,
    #[serde(default)]
    pub kf: KfConfig,
    #[serde(default)]
    pub predict: PredictSettings,
    /// Optional pre-trained checkpoint used by `predict`.
    #[serde(default)]
    pub model: Option<PathBuf>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            version: SCHEMA_VERSION,
            seed: 0,
            activity: walking(),
            seeds: Vec::new(),
            n_seeds: five(),
            experiment: ExperimentConfig::default(),
            kf: KfConfig::default(),
            predict: PredictSettings::default(),
            model: None,
        }
    }
}

impl ScenarioConfig {
    /// Reads and validates a scenario; the format follows the extension
    /// (`.toml`, anything else is JSON).
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingArtifact(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        let cfg = if path.extension().is_some_and(|e| e == "toml") {
            Self::from_toml(&text)?
        } else {
            Self::from_json(&text)?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config("config", e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config("config", e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != SCHEMA_VERSION {
            return Err(Error::config(
                "version",
                format!("unsupported schema version {} (expected {SCHEMA_VERSION})", self.version),
            ));
        }
        if self.seeds.is_empty() && self.n_seeds == 0 {
            return Err(Error::config("n_seeds", "must be >= 1 when `seeds` is empty"));
        }
        if self.predict.stride == 0 {
            return Err(Error::config("predict.stride", "must be >= 1"));
        }
        self.experiment.validate()?;
        self.kf.validate()?;
        if let Some(m) = &self.model {
            if !m.exists() {
                return Err(Error::MissingArtifact(m.clone()));
            }
        }
        Ok(())
    }

    pub fn experiment_seeds(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            (0..self.n_seeds as u64).map(|i| self.seed + i).collect()
        } else {
            self.seeds.clone()
        }
    }

    /// SHA-256 over the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("scenario serializes");
        hex::encode(Sha256::digest(&json))
    }
}
