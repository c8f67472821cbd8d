//! Stratified splitting, cross-validation folds, discrimination metrics
//! and paired model comparison.

mod metrics;
mod report;
mod split;
mod wilcoxon;

pub use metrics::{auc, concordance_index, midranks};
pub use report::{compare_models, mean_sd, select_alpha, CohortSizes, Comparison, EvaluationConfig, EvaluationReport, ModelEvaluation};
pub use split::{stratified_kfold, stratified_split};
pub use wilcoxon::{wilcoxon_signed_rank, SignedRankTest, Sided, EXACT_MAX_N};
