//! Prediction models on the merged representation: penalized logistic and
//! Cox regression, Gaussian naive Bayes, k-means and DBSCAN.

mod cox;
mod dbscan;
mod kmeans;
mod logistic;
mod naive_bayes;
mod solver;

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use cox::{cox_partial_log_likelihood, coxph_elasticnet_fit, coxph_kkt_violation, coxph_risk_score};
pub use dbscan::dbscan;
pub use kmeans::kmeans;
pub use logistic::{logistic_kkt_violation, logistic_l1_fit, logistic_predict_proba};
pub use naive_bayes::{gaussian_nb_fit_predict, GaussianNb};

/// Two-sided 95% normal quantile.
const Z_95: f64 = 1.959_963_984_540_054;
/// Columns with a smaller population standard deviation are treated as constant.
const MIN_STD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyConfig {
    pub alpha: f64,
    /// 1 is pure L1, 0 pure ridge.
    pub l1_ratio: f64,
    pub standardize: bool,
}

impl PenaltyConfig {
    pub fn new(alpha: f64, l1_ratio: f64) -> Self {
        Self {
            alpha,
            l1_ratio,
            standardize: true,
        }
    }

    pub fn lasso(alpha: f64) -> Self {
        Self::new(alpha, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(Error::Config(format!("alpha must be nonnegative, got {}", self.alpha)));
        }
        if !(0.0..=1.0).contains(&self.l1_ratio) {
            return Err(Error::Config(format!("l1_ratio must lie in [0, 1], got {}", self.l1_ratio)));
        }
        Ok(())
    }

    #[cfg(test)]
    pub(crate) fn value(&self, beta: &[f64]) -> f64 {
        let l1: f64 = beta.iter().map(|b| b.abs()).sum();
        let l2: f64 = beta.iter().map(|b| b * b).sum();
        self.alpha * (self.l1_ratio * l1 + 0.5 * (1.0 - self.l1_ratio) * l2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Logistic,
    Cox,
    GaussianNb,
    Kmeans,
    Dbscan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureInterpretation {
    pub name: String,
    pub estimate: f64,
    pub standard_error: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub selected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub seed: u64,
    pub iterations: usize,
    pub converged: bool,
    /// Penalized objective after each accepted step, for solver fits.
    pub objective_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub kind: ModelKind,
    pub feature_names: Vec<String>,
    /// Original feature scale.
    pub coefficients: Array1<f64>,
    pub intercept: Option<f64>,
    pub penalty: Option<PenaltyConfig>,
    pub interpretation: Vec<FeatureInterpretation>,
    pub meta: TrainingMeta,
}

impl FittedModel {
    pub fn n_selected(&self) -> usize {
        self.interpretation.iter().filter(|f| f.selected).count()
    }

    pub(crate) fn check_features(&self, x: ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.coefficients.len() {
            return Err(Error::Schema(format!(
                "model expects {} features, got {}",
                self.coefficients.len(),
                x.ncols()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringResult {
    pub kind: ModelKind,
    /// Cluster index per sample; −1 marks DBSCAN noise.
    pub assignments: Vec<i64>,
    pub centroids: Option<Array2<f64>>,
    pub parameters: Vec<(String, f64)>,
    /// Within-cluster sum of squares after each Lloyd iteration (k-means).
    pub sse_trace: Vec<f64>,
    pub iterations: usize,
}

impl ClusteringResult {
    pub fn n_clusters(&self) -> usize {
        self.assignments
            .iter()
            .filter(|&&a| a >= 0)
            .max()
            .map_or(0, |&m| m as usize + 1)
    }
}

/// Column scaling used inside the solvers.
#[derive(Debug, Clone)]
pub(crate) struct Scaling {
    pub means: Array1<f64>,
    pub stds: Array1<f64>,
}

impl Scaling {
    /// Population moments when `standardize`, identity otherwise. Constant
    /// columns map to zero.
    pub fn fit(x: ArrayView2<f64>, standardize: bool, center: bool) -> Self {
        let p = x.ncols();
        if !standardize {
            return Self {
                means: Array1::zeros(p),
                stds: Array1::ones(p),
            };
        }
        let col_means = crate::linalg::column_means(x);
        let n = x.nrows().max(1) as f64;
        let stds = Array1::from_shape_fn(p, |j| {
            let m = col_means[j];
            (x.column(j).iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt()
        });
        let means = if center { col_means } else { Array1::zeros(p) };
        Self { means, stds }
    }

    pub fn is_constant(&self, j: usize) -> bool {
        self.stds[j] < MIN_STD
    }

    pub fn apply(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = x.to_owned();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            if self.is_constant(j) {
                col.fill(0.0);
            } else {
                let (m, s) = (self.means[j], self.stds[j]);
                col.mapv_inplace(|v| (v - m) / s);
            }
        }
        out
    }

    /// Scaled-space coefficients to original scale.
    pub fn unscale(&self, beta: &Array1<f64>) -> Array1<f64> {
        Array1::from_shape_fn(beta.len(), |j| {
            if self.is_constant(j) {
                0.0
            } else {
                beta[j] / self.stds[j]
            }
        })
    }

    /// Original-scale coefficients to scaled space.
    pub fn rescale(&self, beta: &Array1<f64>) -> Array1<f64> {
        Array1::from_shape_fn(beta.len(), |j| {
            if self.is_constant(j) {
                0.0
            } else {
                beta[j] * self.stds[j]
            }
        })
    }
}

pub(crate) fn check_rows(x: ArrayView2<f64>, n: usize) -> Result<()> {
    if x.nrows() != n {
        return Err(Error::Schema(format!("{} rows in X, {n} outcomes", x.nrows())));
    }
    if x.nrows() == 0 {
        return Err(Error::EmptyInput);
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateData("non-finite feature value".into()));
    }
    Ok(())
}

/// Wald summaries from a covariance matrix, or selection flags only.
pub(crate) fn interpret(
    names: &[String],
    estimates: &Array1<f64>,
    covariance: Option<&Array2<f64>>,
) -> Vec<FeatureInterpretation> {
    names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let estimate = estimates[j];
            let se = covariance
                .map(|c| c[[j, j]])
                .filter(|v| v.is_finite() && *v >= 0.0)
                .map(f64::sqrt);
            FeatureInterpretation {
                name: name.clone(),
                estimate,
                standard_error: se,
                ci_low: se.map(|s| estimate - Z_95 * s),
                ci_high: se.map(|s| estimate + Z_95 * s),
                selected: estimate != 0.0,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn penalty_validation() {
        assert!(PenaltyConfig::new(-1.0, 0.5).validate().is_err());
        assert!(PenaltyConfig::new(1.0, 1.5).validate().is_err());
        assert!(PenaltyConfig::new(0.0, 0.0).validate().is_ok());
        assert!((PenaltyConfig::new(2.0, 0.5).value(&[1.0, -2.0]) - (3.0 + 2.5)).abs() < 1e-12);
    }

    #[test]
    fn scaling_round_trip() {
        let x = array![[1.0, 5.0], [3.0, 5.0], [5.0, 5.0]];
        let s = Scaling::fit(x.view(), true, true);
        assert!(s.is_constant(1));
        let z = s.apply(x.view());
        assert_eq!(z.column(1).to_vec(), vec![0.0; 3]);
        assert!((z[[2, 0]] - 2.0 / (8.0f64 / 3.0).sqrt()).abs() < 1e-12);
        let b = array![0.7, 0.0];
        assert!((&s.unscale(&s.rescale(&b)) - &b).iter().all(|v| v.abs() < 1e-15));
    }
}
