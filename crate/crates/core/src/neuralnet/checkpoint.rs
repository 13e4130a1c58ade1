//! Binary checkpoint container:
//!
//! ```text
//! magic    8 bytes  "PDRNNCK\0"
//! version  u32 LE
//! hlen     u64 LE   length of the header JSON
//! header   hlen bytes UTF-8 JSON (everything except the weights)
//! weights  weight_count × f64 LE, in parameter layout order
//! ```

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::features::{FeatureConfig, Normalizer};
use super::spec::NetworkSpec;
use super::train::TrainConfig;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"PDRNNCK\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub train_loss: Vec<f64>,
    /// Validation MSE (m², squared Euclidean) per epoch.
    pub val_mse: Vec<f64>,
    pub seed: u64,
    pub config: TrainConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint {
    pub spec: NetworkSpec,
    pub features: FeatureConfig,
    pub input_norm: Normalizer,
    pub output_norm: Normalizer,
    pub meta: Option<TrainingMeta>,
    pub weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format_version: u32,
    spec: NetworkSpec,
    features: FeatureConfig,
    input_norm: Normalizer,
    output_norm: Normalizer,
    meta: Option<TrainingMeta>,
    weight_count: usize,
}

impl ModelCheckpoint {
    pub fn check(&self) -> Result<()> {
        let expected = self.spec.layout().total;
        if self.weights.len() != expected {
            return Err(Error::Checkpoint(format!(
                "weight count {} does not match the {expected} implied by the network spec",
                self.weights.len()
            )));
        }
        if self.input_norm.dim() != self.spec.input_dim || self.output_norm.dim() != self.spec.output_dim {
            return Err(Error::Checkpoint("normalization statistics do not match network dims".into()));
        }
        if self.features.input_dim() != self.spec.input_dim {
            return Err(Error::Checkpoint("feature config does not match network input_dim".into()));
        }
        Ok(())
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        self.check()?;
        let header = Header {
            format_version: FORMAT_VERSION,
            spec: self.spec.clone(),
            features: self.features.clone(),
            input_norm: self.input_norm.clone(),
            output_norm: self.output_norm.clone(),
            meta: self.meta.clone(),
            weight_count: self.weights.len(),
        };
        let json = serde_json::to_vec(&header)?;
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        let mut blob = Vec::with_capacity(8 * self.weights.len());
        for x in &self.weights {
            blob.extend_from_slice(&x.to_le_bytes());
        }
        w.write_all(&blob)?;
        Ok(())
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported format version {version}")));
        }
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let hlen = u64::from_le_bytes(b8) as usize;
        let mut json = vec![0u8; hlen];
        r.read_exact(&mut json)?;
        let header: Header =
            serde_json::from_slice(&json).map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
        if header.format_version != version {
            return Err(Error::Checkpoint("header version disagrees with preamble".into()));
        }
        let mut blob = Vec::new();
        r.read_to_end(&mut blob)?;
        if blob.len() != 8 * header.weight_count {
            return Err(Error::Checkpoint(format!(
                "expected {} weight bytes, found {}",
                8 * header.weight_count,
                blob.len()
            )));
        }
        let weights = blob
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let ckpt = ModelCheckpoint {
            spec: header.spec,
            features: header.features,
            input_norm: header.input_norm,
            output_norm: header.output_norm,
            meta: header.meta,
            weights,
        };
        ckpt.check()?;
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write(std::io::BufWriter::new(f))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingArtifact(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        Self::read(std::io::BufReader::new(f))
    }
}
