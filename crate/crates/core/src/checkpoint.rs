//! JSON checkpoints for base and ensemble models.
//!
//! A base checkpoint holds the training configuration, the label inventory,
//! the core label set, every parameter tensor and the best dev score. An
//! ensemble checkpoint refers to its base checkpoints by path (relative
//! paths are resolved against the ensemble file's directory) and records a
//! content hash for each so that a modified base is detected on load.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::autodiff::ParamStore;
use crate::decode::CoreLabelSet;
use crate::ensemble::{EnsembleConfig, EnsembleModel};
use crate::error::{Error, Result};
use crate::model::{ModelDims, SpanScorer, SrlModel};
use crate::train::TrainConfig;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaseCheckpoint {
    pub format_version: u32,
    pub config: TrainConfig,
    pub labels: Vec<String>,
    pub core: Vec<String>,
    pub dims: ModelDims,
    pub params: ParamStore,
    pub best_dev_f1: Option<f64>,
    pub best_epoch: usize,
    /// Word vector file used in training.
    pub embeddings: Option<PathBuf>,
    /// Whether `embeddings` holds per-sentence contextual vectors.
    #[serde(default)]
    pub contextual: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaseRef {
    pub path: PathBuf,
    pub hash: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleCheckpoint {
    pub format_version: u32,
    pub config: EnsembleConfig,
    pub bases: Vec<BaseRef>,
    pub params: ParamStore,
    pub best_dev_f1: Option<f64>,
    pub best_epoch: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Checkpoint {
    Base(BaseCheckpoint),
    Ensemble(EnsembleCheckpoint),
}

impl BaseCheckpoint {
    pub fn new(model: &SrlModel, config: TrainConfig) -> Self {
        BaseCheckpoint {
            format_version: FORMAT_VERSION,
            config,
            labels: model.labels().to_vec(),
            core: model.core().iter().map(str::to_string).collect(),
            dims: model.dims(),
            params: model.params().clone(),
            best_dev_f1: None,
            best_epoch: 0,
            embeddings: None,
            contextual: false,
        }
    }

    pub fn model(&self) -> Result<SrlModel> {
        SrlModel::from_parts(
            &self.labels,
            CoreLabelSet::new(self.core.iter().map(String::as_str)),
            self.dims,
            self.params.clone(),
        )
    }
}

/// 64-bit FNV-1a of `bytes`, as 16 hex digits.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}

pub fn file_hash(path: impl AsRef<Path>) -> Result<String> {
    Ok(content_hash(&fs::read(path)?))
}

fn check_version(v: u32) -> Result<()> {
    if v == FORMAT_VERSION {
        Ok(())
    } else {
        Err(Error::Incompatible(format!(
            "checkpoint format {v}, expected {FORMAT_VERSION}"
        )))
    }
}

impl Checkpoint {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        let ckpt: Checkpoint =
            serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))?;
        match &ckpt {
            Checkpoint::Base(b) => check_version(b.format_version)?,
            Checkpoint::Ensemble(e) => check_version(e.format_version)?,
        }
        Ok(ckpt)
    }
}

pub fn save_base(path: impl AsRef<Path>, ckpt: &BaseCheckpoint) -> Result<()> {
    Checkpoint::Base(ckpt.clone()).save(path)
}

pub fn load_base(path: impl AsRef<Path>) -> Result<BaseCheckpoint> {
    let path = path.as_ref();
    match Checkpoint::load(path)? {
        Checkpoint::Base(b) => Ok(b),
        Checkpoint::Ensemble(_) => Err(Error::Incompatible(format!(
            "{} is an ensemble checkpoint, expected a base model",
            path.display()
        ))),
    }
}

/// Resolves a stored base path against the ensemble checkpoint location.
pub fn resolve_base(ensemble_path: &Path, base: &Path) -> PathBuf {
    if base.is_absolute() {
        base.to_path_buf()
    } else {
        ensemble_path
            .parent()
            .unwrap_or_else(|| Path::new(""))
            .join(base)
    }
}

impl EnsembleCheckpoint {
    /// `base_paths` are stored as given; relative paths must be relative to
    /// the directory the ensemble checkpoint will be written to.
    pub fn new(
        model: &EnsembleModel,
        config: EnsembleConfig,
        base_paths: &[PathBuf],
        base_hashes: Vec<String>,
    ) -> Self {
        EnsembleCheckpoint {
            format_version: FORMAT_VERSION,
            config,
            bases: base_paths
                .iter()
                .zip(base_hashes)
                .map(|(p, h)| BaseRef {
                    path: p.clone(),
                    hash: h,
                })
                .collect(),
            params: model.params().clone(),
            best_dev_f1: None,
            best_epoch: 0,
        }
    }

    /// Loads the bases (checking their hashes) and rebuilds the ensemble.
    /// Also returns the base checkpoints.
    pub fn model(&self, own_path: &Path) -> Result<(EnsembleModel, Vec<BaseCheckpoint>)> {
        let mut bases = Vec::with_capacity(self.bases.len());
        let mut ckpts = Vec::with_capacity(self.bases.len());
        for r in &self.bases {
            let path = resolve_base(own_path, &r.path);
            let hash = file_hash(&path)?;
            if hash != r.hash {
                return Err(Error::Incompatible(format!(
                    "base checkpoint {} changed since the ensemble was trained",
                    path.display()
                )));
            }
            let ckpt = load_base(&path)?;
            bases.push(ckpt.model()?);
            ckpts.push(ckpt);
        }
        Ok((EnsembleModel::from_parts(bases, self.params.clone())?, ckpts))
    }
}
