use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{DatasetOptions, RoleFilter, DEFAULT_MERGE_GAP_S};
use crate::error::{Error, Result};
use crate::model::{Mode, ModelConfig};
use crate::seeds;
use crate::training::TrainConfig;

/// Flat run configuration. Unset fields take the defaults below; the batch
/// size and maximum length default by role filter (therapist-only 128/256,
/// all utterances 64/512).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub transcripts: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,

    pub mode: Mode,
    pub u: usize,
    pub p: usize,
    pub q: usize,
    pub max_len: Option<usize>,
    pub role_filter: RoleFilter,
    pub metadata_enabled: bool,
    pub merge_gap_s: f64,
    /// Dimension of the hash embedder.
    pub embedding_dim: usize,

    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: Option<usize>,
    /// Fraction of training therapists held out for early stopping.
    pub validation_fraction: f64,

    pub k: usize,
    pub bootstrap_n: usize,
    pub parallel_folds: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            transcripts: None,
            embeddings: None,
            vocab: None,
            out_dir: None,
            mode: Mode::MultiTask,
            u: 64,
            p: 10,
            q: 20,
            max_len: None,
            role_filter: RoleFilter::TherapistOnly,
            metadata_enabled: true,
            merge_gap_s: DEFAULT_MERGE_GAP_S,
            embedding_dim: 768,
            learning_rate: 0.001,
            max_epochs: 200,
            patience: 10,
            batch_size: None,
            validation_fraction: 0.1,
            k: 10,
            bootstrap_n: 100_000,
            parallel_folds: 1,
            seed: 42,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn max_len(&self) -> usize {
        self.max_len.unwrap_or(match self.role_filter {
            RoleFilter::TherapistOnly => 256,
            RoleFilter::All => 512,
        })
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size.unwrap_or(match self.role_filter {
            RoleFilter::TherapistOnly => 128,
            RoleFilter::All => 64,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.u == 0 || self.p == 0 || self.q == 0 || self.max_len() == 0 {
            return bad("u, p, q and max_len must be positive".into());
        }
        if self.batch_size() == 0 || self.patience == 0 || self.max_epochs == 0 {
            return bad("batch_size, patience and max_epochs must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad(format!(
                "validation_fraction must lie in (0, 1), got {}",
                self.validation_fraction
            ));
        }
        if self.k < 2 {
            return bad(format!("k must be at least 2, got {}", self.k));
        }
        if self.bootstrap_n == 0 || self.embedding_dim == 0 {
            return bad("bootstrap_n and embedding_dim must be positive".into());
        }
        if !(self.merge_gap_s >= 0.0) {
            return bad("merge_gap_s must be nonnegative".into());
        }
        Ok(())
    }

    pub fn dataset_options(&self) -> DatasetOptions {
        DatasetOptions {
            role_filter: self.role_filter,
            max_len: self.max_len(),
            metadata_enabled: self.metadata_enabled,
            merge_gap_s: self.merge_gap_s,
        }
    }

    /// Model shape for embeddings of width `d` and metadata of width `m`.
    pub fn model_config(&self, d: usize, m: usize) -> ModelConfig {
        ModelConfig {
            mode: self.mode,
            d,
            u: self.u,
            p: self.p,
            q: self.q,
            m,
            max_len: self.max_len(),
        }
    }

    /// Training settings for fold `fold`, seeded independently per fold.
    pub fn train_config(&self, fold: usize) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            max_epochs: self.max_epochs,
            patience: self.patience,
            batch_size: self.batch_size(),
            seed: seeds::derive_indexed(self.seed, seeds::INIT, fold as u64),
        }
    }
}
