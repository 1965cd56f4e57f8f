//! Grouped cross-validation, metrics, significance testing, saliency curves
//! and the ablation grid.

pub mod ablation;
pub mod bootstrap;
pub mod crossval;
pub mod folds;
pub mod metrics;
pub mod saliency;

pub use ablation::{
    grid, relative_improvement, run_ablation, summarize_toggles, AblationCell, AblationReport,
    ToggleSummary,
};
pub use bootstrap::{paired_bootstrap, BootstrapResult};
pub use crossval::{
    config_echo, cross_validate, fold_assignment, predict_example, system_name, CrossValOutcome,
    EvalReport, FoldReport, SessionPrediction,
};
pub use folds::{carve_validation, grouped_kfold, FoldAssignment};
pub use metrics::{macro_f1, ClassMetrics, Confusion, F1Report};
pub use saliency::{
    aggregate_alphas, aggregate_saliency, resample_curve, write_saliency_csv, SaliencyCurve,
    SALIENCY_BINS,
};
