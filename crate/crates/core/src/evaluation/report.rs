use serde::{Deserialize, Serialize};

use super::wilcoxon::{wilcoxon_signed_rank, Sided};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationConfig {
    pub test_size: f64,
    pub n_folds: usize,
    pub seed: u64,
    pub comparison_level: f64,
    pub comparison_sided: Sided,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            test_size: 0.2,
            n_folds: 10,
            seed: 0,
            comparison_level: 0.10,
            comparison_sided: Sided::Greater,
        }
    }
}

impl EvaluationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.test_size > 0.0 && self.test_size < 1.0) {
            return Err(Error::Config(format!("test_size must lie in (0, 1), got {}", self.test_size)));
        }
        if self.n_folds < 2 {
            return Err(Error::Config(format!("n_folds must be at least 2, got {}", self.n_folds)));
        }
        if !(self.comparison_level > 0.0 && self.comparison_level < 1.0) {
            return Err(Error::Config("comparison level must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEvaluation {
    pub model: String,
    pub metric_name: String,
    pub fold_metrics: Vec<f64>,
    pub fold_mean: f64,
    /// Sample standard deviation across folds.
    pub fold_std: f64,
    pub test_metric: Option<f64>,
}

impl ModelEvaluation {
    pub fn new(model: impl Into<String>, metric_name: impl Into<String>, fold_metrics: Vec<f64>, test_metric: Option<f64>) -> Self {
        let (fold_mean, fold_std) = mean_sd(&fold_metrics);
        Self {
            model: model.into(),
            metric_name: metric_name.into(),
            fold_metrics,
            fold_mean,
            fold_std,
            test_metric,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub model_a: String,
    pub model_b: String,
    /// One-sided (`a` greater) or two-sided p-value; 1 when every fold ties.
    pub p_value: f64,
    pub significant: bool,
    pub note: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CohortSizes {
    pub train: usize,
    pub test: usize,
    /// Cases (or events) across train and test.
    pub cases: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub models: Vec<ModelEvaluation>,
    pub comparisons: Vec<Comparison>,
    pub cohort_sizes: CohortSizes,
}

/// Unweighted mean and sample standard deviation (0 for fewer than two values).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Pairwise signed-rank comparisons on fold metrics, one row per pair
/// `(i, j)` with `i < j` in input order, testing whether `i` beats `j`.
pub fn compare_models(models: &[ModelEvaluation], sided: Sided, level: f64) -> Result<Vec<Comparison>> {
    let folds = models.first().map_or(0, |m| m.fold_metrics.len());
    if models.iter().any(|m| m.fold_metrics.len() != folds) {
        return Err(Error::Schema("models were evaluated on different fold counts".into()));
    }
    let mut rows = Vec::new();
    for i in 0..models.len() {
        for j in i + 1..models.len() {
            let (a, b) = (&models[i], &models[j]);
            let row = match wilcoxon_signed_rank(&a.fold_metrics, &b.fold_metrics, sided, level) {
                Ok(t) => Comparison {
                    model_a: a.model.clone(),
                    model_b: b.model.clone(),
                    p_value: t.p_value,
                    significant: t.significant,
                    note: None,
                },
                Err(Error::AllTied) => Comparison {
                    model_a: a.model.clone(),
                    model_b: b.model.clone(),
                    p_value: 1.0,
                    significant: false,
                    note: Some("no difference".into()),
                },
                Err(e) => return Err(e),
            };
            rows.push(row);
        }
    }
    Ok(rows)
}

/// Index of the largest alpha whose mean fold metric is within one fold
/// standard deviation of the best mean. `fold_metrics[g]` belongs to
/// `alphas[g]`; higher metrics are better.
pub fn select_alpha(alphas: &[f64], fold_metrics: &[Vec<f64>]) -> Result<usize> {
    if alphas.is_empty() || alphas.len() != fold_metrics.len() {
        return Err(Error::Config("alpha grid and fold metrics must be non-empty and aligned".into()));
    }
    let stats: Vec<(f64, f64)> = fold_metrics.iter().map(|m| mean_sd(m)).collect();
    let best = (0..stats.len())
        .filter(|&g| stats[g].0.is_finite())
        .max_by(|&a, &b| stats[a].0.total_cmp(&stats[b].0).then(b.cmp(&a)))
        .ok_or_else(|| Error::Numeric("no finite cross-validation metric".into()))?;
    let threshold = stats[best].0 - stats[best].1;
    let pick = (0..alphas.len())
        .filter(|&g| stats[g].0.is_finite() && stats[g].0 >= threshold)
        .max_by(|&a, &b| alphas[a].total_cmp(&alphas[b]).then(b.cmp(&a)))
        .unwrap_or(best);
    Ok(pick)
}
