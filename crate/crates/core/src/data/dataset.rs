use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::io::EmbeddedSession;
use super::metadata::{encode_metadata, MetadataVocab};
use super::schema::{Session, NUM_CODES};
use super::transform::{merge_turns, RoleFilter, DEFAULT_MERGE_GAP_S};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetOptions {
    pub role_filter: RoleFilter,
    pub max_len: usize,
    pub metadata_enabled: bool,
    pub merge_gap_s: f64,
}

impl DatasetOptions {
    pub fn new(role_filter: RoleFilter, max_len: usize, metadata_enabled: bool) -> Self {
        DatasetOptions {
            role_filter,
            max_len,
            metadata_enabled,
            merge_gap_s: DEFAULT_MERGE_GAP_S,
        }
    }
}

/// One model-ready session.
///
/// `x` holds only the retained rows (head-truncated to `max_len`), so every
/// row is valid. Padding is materialized on demand by the batcher.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub session_id: String,
    pub therapist_id: String,
    pub x: Tensor,
    pub meta: Vec<f64>,
    pub codes: [f64; NUM_CODES],
    pub label: u8,
    /// Tokens of every retained utterance, untruncated; used by the baseline.
    pub tokens: Vec<String>,
}

impl Example {
    pub fn len(&self) -> usize {
        self.x.dims2().0
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub examples: Vec<Example>,
    pub dim: usize,
    pub meta_width: usize,
    pub options: DatasetOptions,
    /// Sessions dropped because nothing survived the role filter.
    pub excluded: Vec<String>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.examples.iter().map(|e| e.label).collect()
    }

    pub fn therapists(&self) -> BTreeSet<&str> {
        self.examples.iter().map(|e| e.therapist_id.as_str()).collect()
    }

    /// A dataset holding the examples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            examples: indices.iter().map(|&i| self.examples[i].clone()).collect(),
            excluded: Vec::new(),
            ..self.clone_header()
        }
    }

    fn clone_header(&self) -> Dataset {
        Dataset {
            examples: Vec::new(),
            dim: self.dim,
            meta_width: self.meta_width,
            options: self.options,
            excluded: self.excluded.clone(),
        }
    }
}

/// Joins transcripts with their utterance embeddings.
///
/// Turns are merged first. An embedding matrix may cover every merged turn
/// (its rows are then role-filtered here) or only the turns the role filter
/// keeps. Examples are ordered by session id.
pub fn build_dataset(
    sessions: &[Session],
    embeddings: &BTreeMap<String, EmbeddedSession>,
    vocab: &MetadataVocab,
    options: DatasetOptions,
) -> Result<Dataset> {
    if options.max_len == 0 {
        return Err(Error::Config("max_len must be positive".into()));
    }
    let missing: Vec<String> = sessions
        .iter()
        .filter(|s| !embeddings.contains_key(&s.session_id))
        .map(|s| s.session_id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingEmbedding(missing));
    }

    let mut ordered: Vec<&Session> = sessions.iter().collect();
    ordered.sort_by(|a, b| a.session_id.cmp(&b.session_id));

    let mut dim: Option<usize> = None;
    let mut examples = Vec::with_capacity(sessions.len());
    let mut excluded = Vec::new();
    for session in ordered {
        let emb = &embeddings[&session.session_id];
        match dim {
            None => dim = Some(emb.dim()),
            Some(d) if d != emb.dim() => {
                return Err(Error::Dimension {
                    expected: d,
                    found: emb.dim(),
                    session: session.session_id.clone(),
                })
            }
            _ => {}
        }
        let merged = merge_turns(&session.utterances, options.merge_gap_s);
        let kept: Vec<usize> = (0..merged.len())
            .filter(|&i| options.role_filter.keeps(merged[i].role))
            .collect();
        if kept.is_empty() {
            excluded.push(session.session_id.clone());
            continue;
        }
        let rows: Vec<usize> = if emb.rows() == merged.len() {
            kept.clone()
        } else if emb.rows() == kept.len() {
            (0..kept.len()).collect()
        } else {
            return Err(Error::Validation(format!(
                "session `{}` has {} embedding rows but {} merged turns ({} retained)",
                session.session_id,
                emb.rows(),
                merged.len(),
                kept.len()
            )));
        };

        let d = emb.dim();
        let take = rows.len().min(options.max_len);
        let mut values = Vec::with_capacity(take * d);
        for &r in &rows[..take] {
            values.extend_from_slice(emb.matrix.row_slice(r));
        }
        let codes = session.labels.codes().map(f64::from);
        examples.push(Example {
            session_id: session.session_id.clone(),
            therapist_id: session.therapist_id.clone(),
            x: Tensor::new(vec![take, d], values)?,
            meta: encode_metadata(&session.metadata, vocab, options.metadata_enabled),
            codes,
            label: session.labels.label(),
            tokens: kept
                .iter()
                .flat_map(|&i| merged[i].tokens.iter().cloned())
                .collect(),
        });
    }
    Ok(Dataset {
        examples,
        dim: dim.unwrap_or(0),
        meta_width: if options.metadata_enabled { vocab.width() } else { 0 },
        options,
        excluded,
    })
}
