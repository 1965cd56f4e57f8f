use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::crossval::{cross_validate, EvalReport};
use crate::config::RunConfig;
use crate::data::{build_dataset, EmbeddedSession, MetadataVocab, RoleFilter, Session};
use crate::error::Result;
use crate::model::Mode;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub system: String,
    pub metadata: bool,
    pub mode: Mode,
    pub role_filter: RoleFilter,
    pub macro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToggleSummary {
    pub toggle: String,
    /// Mean macro-F1 of the cells with the toggle on.
    pub mean_yes: f64,
    pub mean_no: f64,
    /// `(mean_yes − mean_no) / mean_no`; absent when `mean_no` is zero.
    pub relative_improvement: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub cells: Vec<AblationCell>,
    pub toggles: Vec<ToggleSummary>,
}

pub fn relative_improvement(mean_yes: f64, mean_no: f64) -> Option<f64> {
    (mean_no != 0.0).then(|| (mean_yes - mean_no) / mean_no)
}

fn summary(name: &str, cells: &[AblationCell], on: impl Fn(&AblationCell) -> bool) -> ToggleSummary {
    let mean = |want: bool| {
        let v: Vec<f64> = cells.iter().filter(|c| on(c) == want).map(|c| c.macro_f1).collect();
        if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    let (yes, no) = (mean(true), mean(false));
    ToggleSummary {
        toggle: name.to_string(),
        mean_yes: yes,
        mean_no: no,
        relative_improvement: relative_improvement(yes, no),
    }
}

/// Per-toggle means over the grid. "Yes" is metadata on, multi-task and
/// therapist-only utterances respectively.
pub fn summarize_toggles(cells: &[AblationCell]) -> Vec<ToggleSummary> {
    vec![
        summary("metadata", cells, |c| c.metadata),
        summary("multi_task", cells, |c| c.mode == Mode::MultiTask),
        summary("therapist_only", cells, |c| c.role_filter == RoleFilter::TherapistOnly),
    ]
}

/// The eight (metadata, mode, role filter) combinations in grid order.
pub fn grid() -> Vec<(bool, Mode, RoleFilter)> {
    let mut out = Vec::with_capacity(8);
    for metadata in [true, false] {
        for mode in [Mode::MultiTask, Mode::SingleTask] {
            for role in [RoleFilter::TherapistOnly, RoleFilter::All] {
                out.push((metadata, mode, role));
            }
        }
    }
    out
}

/// Cross-validates every grid cell. Each cell rebuilds its dataset from the
/// raw sessions so role filtering and metadata follow the cell, while the
/// remaining settings come from `base`. Explicit `max_len` or `batch_size`
/// overrides apply to every cell; otherwise they default per role.
pub fn run_ablation(
    sessions: &[Session],
    embeddings: &BTreeMap<String, EmbeddedSession>,
    vocab: &MetadataVocab,
    base: &RunConfig,
) -> Result<(AblationReport, Vec<EvalReport>)> {
    base.validate()?;
    let mut cells = Vec::new();
    let mut reports = Vec::new();
    for (metadata, mode, role) in grid() {
        let cfg = RunConfig {
            metadata_enabled: metadata,
            mode,
            role_filter: role,
            ..base.clone()
        };
        let dataset = build_dataset(sessions, embeddings, vocab, cfg.dataset_options())?;
        let outcome = cross_validate(&dataset, &cfg)?;
        cells.push(AblationCell {
            system: outcome.report.system.clone(),
            metadata,
            mode,
            role_filter: role,
            macro_f1: outcome.report.macro_f1,
        });
        reports.push(outcome.report);
    }
    let toggles = summarize_toggles(&cells);
    Ok((AblationReport { cells, toggles }, reports))
}
