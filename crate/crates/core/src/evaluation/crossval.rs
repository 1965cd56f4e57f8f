use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::folds::{carve_validation, grouped_kfold, FoldAssignment};
use super::metrics::{macro_f1, ClassMetrics, Confusion};
use super::saliency::{aggregate_alphas, SaliencyCurve};
use super::BootstrapResult;
use crate::config::RunConfig;
use crate::data::{Dataset, Example};
use crate::error::{Error, Result};
use crate::model::{predict_total, Mode, Model};
use crate::seeds;
use crate::training::{train, TrainHistory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionPrediction {
    pub session_id: String,
    pub therapist_id: String,
    pub fold: usize,
    pub label: u8,
    pub predicted: u8,
    /// Single-task probability of label 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probability: Option<f64>,
    /// Multi-task unclamped per-code scores in code order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<Vec<f64>>,
    /// Multi-task total of the clamped scores.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total: Option<f64>,
    /// Baseline SVM decision value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_epoch: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stopped_epoch: Option<usize>,
    pub macro_f1: f64,
    pub confusion: Confusion,
}

/// Pooled evaluation of one system over all held-out folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub system: String,
    pub config: serde_json::Value,
    pub folds: Vec<FoldReport>,
    /// One entry per session, ordered by session id.
    pub predictions: Vec<SessionPrediction>,
    pub confusion: Confusion,
    pub per_class: [ClassMetrics; 2],
    pub macro_f1: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bootstrap: Option<BootstrapResult>,
}

impl EvalReport {
    pub fn from_predictions(
        system: String,
        config: serde_json::Value,
        folds: Vec<FoldReport>,
        mut predictions: Vec<SessionPrediction>,
    ) -> Result<EvalReport> {
        predictions.sort_by(|a, b| a.session_id.cmp(&b.session_id));
        let preds: Vec<u8> = predictions.iter().map(|p| p.predicted).collect();
        let labels: Vec<u8> = predictions.iter().map(|p| p.label).collect();
        let f1 = macro_f1(&preds, &labels)?;
        Ok(EvalReport {
            system,
            config,
            folds,
            predictions,
            confusion: f1.confusion,
            per_class: f1.per_class,
            macro_f1: f1.macro_f1,
            bootstrap: None,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<EvalReport> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

/// Outcome of a cross-validation run.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossValOutcome {
    pub report: EvalReport,
    /// Attention curves pooled over every held-out session.
    pub saliency: Vec<SaliencyCurve>,
    pub histories: Vec<TrainHistory>,
}

/// Predicted label plus the attention of every head for one session.
pub fn predict_example(model: &Model, ex: &Example, fold: usize) -> Result<(SessionPrediction, Vec<Vec<f64>>)> {
    let mask = vec![true; ex.len()];
    let mut pred = SessionPrediction {
        session_id: ex.session_id.clone(),
        therapist_id: ex.therapist_id.clone(),
        fold,
        label: ex.label,
        predicted: 0,
        probability: None,
        scores: None,
        total: None,
        decision: None,
    };
    let trace = match model.mode() {
        Mode::SingleTask => {
            let (p, trace) = model.single_task_forward(&ex.x, &mask, &ex.meta)?;
            pred.predicted = u8::from(p >= 0.5);
            pred.probability = Some(p);
            trace
        }
        Mode::MultiTask => {
            let (scores, trace) = model.multi_task_forward(&ex.x, &mask, &ex.meta)?;
            let total = predict_total(&scores);
            pred.predicted = total.label;
            pred.scores = Some(scores.to_vec());
            pred.total = Some(total.total);
            trace
        }
    };
    Ok((pred, trace.alphas))
}

pub fn system_name(mode: Mode, metadata: bool, role: crate::data::RoleFilter) -> String {
    format!(
        "{mode}/metadata_{}/{role}",
        if metadata { "on" } else { "off" }
    )
}

/// Configuration echo written into reports; excludes settings that do not
/// affect results.
pub fn config_echo(cfg: &RunConfig, dataset: &Dataset) -> serde_json::Value {
    let mut run = serde_json::to_value(cfg).expect("config serializes");
    if let Some(obj) = run.as_object_mut() {
        obj.remove("out_dir");
        obj.remove("parallel_folds");
        obj.insert("max_len".into(), cfg.max_len().into());
        obj.insert("batch_size".into(), cfg.batch_size().into());
    }
    serde_json::json!({
        "run": run,
        "dataset": {
            "n_sessions": dataset.len(),
            "dim": dataset.dim,
            "meta_width": dataset.meta_width,
            "excluded": dataset.excluded,
        }
    })
}

pub(crate) fn check_dataset_matches(cfg: &RunConfig, dataset: &Dataset) -> Result<()> {
    let o = dataset.options;
    if o.role_filter != cfg.role_filter || o.metadata_enabled != cfg.metadata_enabled {
        return Err(Error::Config(format!(
            "dataset was built with role {} and metadata {}, config asks for role {} and metadata {}",
            o.role_filter, o.metadata_enabled, cfg.role_filter, cfg.metadata_enabled
        )));
    }
    Ok(())
}

/// Runs `f` over `0..n` on up to `threads` workers, keeping index order.
pub(crate) fn map_folds<T, F>(n: usize, threads: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    if threads <= 1 {
        return (0..n).map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {threads} workers: {e}")))?;
    pool.install(|| (0..n).into_par_iter().map(f).collect())
}

pub fn fold_assignment(cfg: &RunConfig, dataset: &Dataset) -> Result<FoldAssignment> {
    let therapists: Vec<&str> = dataset.examples.iter().map(|e| e.therapist_id.as_str()).collect();
    grouped_kfold(&therapists, cfg.k, seeds::derive(cfg.seed, seeds::FOLDS))
}

struct FoldResult {
    report: FoldReport,
    predictions: Vec<SessionPrediction>,
    alphas: Vec<(usize, Vec<Vec<f64>>)>,
    history: TrainHistory,
}

/// Grouped k-fold cross-validation with pooled held-out predictions.
pub fn cross_validate(dataset: &Dataset, cfg: &RunConfig) -> Result<CrossValOutcome> {
    cfg.validate()?;
    check_dataset_matches(cfg, dataset)?;
    let therapists: Vec<&str> = dataset.examples.iter().map(|e| e.therapist_id.as_str()).collect();
    let folds = fold_assignment(cfg, dataset)?;
    let model_cfg = cfg.model_config(dataset.dim, dataset.meta_width);

    let results = map_folds(folds.k(), cfg.parallel_folds, |f| -> Result<FoldResult> {
        let rest = folds.complement(f);
        let (tr, va) = carve_validation(
            &rest,
            &therapists,
            cfg.validation_fraction,
            seeds::derive_indexed(cfg.seed, seeds::VALIDATION, f as u64),
        )?;
        let train_set = dataset.subset(&tr);
        let val_set = dataset.subset(&va);
        let (model, history) = train(&train_set, &val_set, model_cfg, &cfg.train_config(f))?;
        let mut predictions = Vec::new();
        let mut alphas = Vec::new();
        for &i in &folds.folds[f] {
            let (p, a) = predict_example(&model, &dataset.examples[i], f)?;
            predictions.push(p);
            alphas.push((i, a));
        }
        let preds: Vec<u8> = predictions.iter().map(|p| p.predicted).collect();
        let labels: Vec<u8> = predictions.iter().map(|p| p.label).collect();
        let f1 = macro_f1(&preds, &labels)?;
        Ok(FoldResult {
            report: FoldReport {
                fold: f,
                n_train: tr.len(),
                n_val: va.len(),
                n_test: predictions.len(),
                best_epoch: Some(history.best_epoch),
                stopped_epoch: Some(history.stopped_epoch),
                macro_f1: f1.macro_f1,
                confusion: f1.confusion,
            },
            predictions,
            alphas,
            history,
        })
    })?;

    let mut reports = Vec::new();
    let mut predictions = Vec::new();
    let mut alphas = Vec::new();
    let mut histories = Vec::new();
    for r in results {
        reports.push(r.report);
        predictions.extend(r.predictions);
        alphas.extend(r.alphas);
        histories.push(r.history);
    }
    alphas.sort_by_key(|(i, _)| *i);
    let alphas: Vec<Vec<Vec<f64>>> = alphas.into_iter().map(|(_, a)| a).collect();
    let saliency = aggregate_alphas(cfg.mode, &alphas)?;
    let report = EvalReport::from_predictions(
        system_name(cfg.mode, cfg.metadata_enabled, cfg.role_filter),
        config_echo(cfg, dataset),
        reports,
        predictions,
    )?;
    Ok(CrossValOutcome {
        report,
        saliency,
        histories,
    })
}
