//! Unigram tf-idf features, F-test selection and a linear SVM, evaluated
//! with the same grouped folds as the neural models.

pub mod select;
pub mod svm;
pub mod tfidf;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use select::{f_statistics, f_test_select, FeatureSelection, DEFAULT_K};
pub use svm::{svm_objective, svm_train, LinearSvmModel, SvmParams};
pub use tfidf::{fit_tfidf, smooth_idf, tfidf_transform, SparseVec, TfidfVocab};

use crate::config::RunConfig;
use crate::data::{merge_turns, RoleFilter, Session};
use crate::error::{Error, Result};
use crate::evaluation::crossval::map_folds;
use crate::evaluation::{grouped_kfold, macro_f1, EvalReport, FoldReport, SessionPrediction};
use crate::seeds;

pub const BASELINE_FORMAT_VERSION: u32 = 1;

/// One session as a bag of retained tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub session_id: String,
    pub therapist_id: String,
    pub label: u8,
    pub tokens: Vec<String>,
}

/// Documents ordered by session id. Sessions with no retained turn are
/// returned separately, matching the neural dataset.
pub fn session_documents(
    sessions: &[Session],
    role_filter: RoleFilter,
    merge_gap_s: f64,
) -> (Vec<Document>, Vec<String>) {
    let mut ordered: Vec<&Session> = sessions.iter().collect();
    ordered.sort_by(|a, b| a.session_id.cmp(&b.session_id));
    let mut docs = Vec::new();
    let mut excluded = Vec::new();
    for s in ordered {
        let kept: Vec<_> = merge_turns(&s.utterances, merge_gap_s)
            .into_iter()
            .filter(|u| role_filter.keeps(u.role))
            .collect();
        if kept.is_empty() {
            excluded.push(s.session_id.clone());
            continue;
        }
        docs.push(Document {
            session_id: s.session_id.clone(),
            therapist_id: s.therapist_id.clone(),
            label: s.labels.label(),
            tokens: kept.into_iter().flat_map(|u| u.tokens).collect(),
        });
    }
    (docs, excluded)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineModel {
    pub format_version: u32,
    pub role_filter: RoleFilter,
    pub k: usize,
    pub vocab: TfidfVocab,
    pub selection: FeatureSelection,
    pub svm: LinearSvmModel,
}

impl BaselineModel {
    pub fn features<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<f64> {
        self.selection.project(&tfidf_transform(tokens, &self.vocab))
    }

    pub fn decision<S: AsRef<str>>(&self, tokens: &[S]) -> f64 {
        self.svm.decision(&self.features(tokens))
    }

    pub fn predict<S: AsRef<str>>(&self, tokens: &[S]) -> u8 {
        u8::from(self.decision(tokens) >= 0.0)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<BaselineModel> {
        let model: BaselineModel = serde_json::from_str(&fs::read_to_string(path)?)?;
        if model.format_version != BASELINE_FORMAT_VERSION {
            return Err(Error::Version(model.format_version));
        }
        if model.svm.w.len() != model.selection.indices.len()
            || model.selection.indices.iter().any(|&j| j >= model.vocab.len())
        {
            return Err(Error::Validation("baseline model parts disagree in size".into()));
        }
        Ok(model)
    }
}

/// Fits vocabulary, selection and SVM on `docs` only.
pub fn fit_baseline(
    docs: &[&Document],
    role_filter: RoleFilter,
    k: usize,
    params: SvmParams,
) -> Result<BaselineModel> {
    let tokens: Vec<&Vec<String>> = docs.iter().map(|d| &d.tokens).collect();
    let vocab = fit_tfidf(&tokens)?;
    let rows: Vec<SparseVec> = tokens.iter().map(|t| tfidf_transform(t, &vocab)).collect();
    let y: Vec<u8> = docs.iter().map(|d| d.label).collect();
    let selection = f_test_select(&rows, &y, vocab.len(), k)?;
    let x: Vec<Vec<f64>> = rows.iter().map(|r| selection.project(r)).collect();
    let svm = svm_train(&x, &y, params)?;
    Ok(BaselineModel {
        format_version: BASELINE_FORMAT_VERSION,
        role_filter,
        k,
        vocab,
        selection,
        svm,
    })
}

/// SVM settings for fold `fold` of a run seeded with `seed`.
pub fn svm_params(seed: u64, fold: usize) -> SvmParams {
    SvmParams {
        seed: seeds::derive_indexed(seed, seeds::SVM, fold as u64),
        ..SvmParams::default()
    }
}

/// Grouped k-fold evaluation of the baseline. Folds come from the same seed
/// derivation as the neural cross-validation, so the held-out sets agree.
pub fn baseline_crossval(docs: &[Document], cfg: &RunConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let therapists: Vec<&str> = docs.iter().map(|d| d.therapist_id.as_str()).collect();
    let folds = grouped_kfold(&therapists, cfg.k, seeds::derive(cfg.seed, seeds::FOLDS))?;
    let per_fold = map_folds(folds.k(), cfg.parallel_folds, |f| {
        let train: Vec<&Document> = folds.complement(f).into_iter().map(|i| &docs[i]).collect();
        let model = fit_baseline(&train, cfg.role_filter, DEFAULT_K, svm_params(cfg.seed, f))?;
        let preds: Vec<SessionPrediction> = folds.folds[f]
            .iter()
            .map(|&i| {
                let d = &docs[i];
                let decision = model.decision(&d.tokens);
                SessionPrediction {
                    session_id: d.session_id.clone(),
                    therapist_id: d.therapist_id.clone(),
                    fold: f,
                    label: d.label,
                    predicted: u8::from(decision >= 0.0),
                    probability: None,
                    scores: None,
                    total: None,
                    decision: Some(decision),
                }
            })
            .collect();
        let p: Vec<u8> = preds.iter().map(|p| p.predicted).collect();
        let y: Vec<u8> = preds.iter().map(|p| p.label).collect();
        let f1 = macro_f1(&p, &y)?;
        Ok((
            FoldReport {
                fold: f,
                n_train: train.len(),
                n_val: 0,
                n_test: preds.len(),
                best_epoch: None,
                stopped_epoch: None,
                macro_f1: f1.macro_f1,
                confusion: f1.confusion,
            },
            preds,
        ))
    })?;
    let mut reports = Vec::new();
    let mut predictions = Vec::new();
    for (r, p) in per_fold {
        reports.push(r);
        predictions.extend(p);
    }
    let config = serde_json::json!({
        "run": {
            "role_filter": cfg.role_filter,
            "merge_gap_s": cfg.merge_gap_s,
            "k": cfg.k,
            "seed": cfg.seed,
            "selected_features": DEFAULT_K,
            "svm_c": SvmParams::default().c,
            "svm_epochs": SvmParams::default().epochs,
        },
        "dataset": { "n_sessions": docs.len() },
    });
    EvalReport::from_predictions(format!("baseline/{}", cfg.role_filter), config, reports, predictions)
}
