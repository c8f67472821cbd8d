//! Multi-view integration: early fusion, AJIVE and group factor analysis.
//!
//! Every method produces a [`MergedRepresentation`]: a samples × components
//! score matrix whose columns carry provenance labels, plus per-view weight
//! tables and a per-component, per-view variance-explained table.

mod ajive;
mod early;
mod gfa;

use std::collections::BTreeSet;
use std::fmt;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::ModalityDataset;
use crate::error::{Error, Result};
use crate::linalg;
use crate::pca::{self, RankSelector};

pub use ajive::{ajive_fit, AjiveDecomposition, AjiveModel, AjiveThresholds};
pub use early::{early_fusion, EarlyFusionModel};
pub use gfa::{gfa_fit, gfa_impute_latent, GfaModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Early,
    EarlyPca,
    Ajive,
    Gfa,
}

impl Method {
    pub fn needs_reduction(self) -> bool {
        matches!(self, Method::EarlyPca | Method::Ajive)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegrationConfig {
    pub method: Method,
    /// Per-view signal ranks `m_i`.
    pub per_view_ranks: Option<Vec<usize>>,
    /// Per-view explained-variance target used to pick `m_i`.
    pub variance_fraction: Option<f64>,
    /// Initial number of GFA factors.
    pub max_factors: usize,
    /// GFA factors explaining less than this fraction in every view are dropped.
    pub prune_fraction: f64,
    pub seed: u64,
    pub gfa_tolerance: f64,
    pub gfa_max_iter: usize,
    pub ajive_resamples: usize,
    pub ajive_percentile: f64,
}

impl Default for IntegrationConfig {
    fn default() -> Self {
        Self {
            method: Method::Ajive,
            per_view_ranks: None,
            variance_fraction: None,
            max_factors: 10,
            prune_fraction: 0.05,
            seed: 0,
            gfa_tolerance: 1e-6,
            gfa_max_iter: 1000,
            ajive_resamples: 1000,
            ajive_percentile: 0.95,
        }
    }
}

impl IntegrationConfig {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let has_ranks = self.per_view_ranks.is_some();
        let has_fraction = self.variance_fraction.is_some();
        if self.method.needs_reduction() && has_ranks == has_fraction {
            return Err(Error::Config(
                "exactly one of per-view ranks or variance fraction must be set".into(),
            ));
        }
        if has_ranks && has_fraction {
            return Err(Error::Config(
                "per-view ranks and variance fraction are mutually exclusive".into(),
            ));
        }
        if let Some(p) = self.variance_fraction {
            RankSelector::VarianceFraction(p).validate()?;
        }
        if let Some(r) = &self.per_view_ranks {
            if r.iter().any(|&m| m == 0) {
                return Err(Error::Config("per-view ranks must be positive".into()));
            }
        }
        if self.max_factors == 0 {
            return Err(Error::Config("max_factors must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.prune_fraction) {
            return Err(Error::Config("prune fraction must lie in [0, 1)".into()));
        }
        if !(self.ajive_percentile > 0.0 && self.ajive_percentile < 1.0) {
            return Err(Error::Config("ajive percentile must lie in (0, 1)".into()));
        }
        if self.ajive_resamples == 0 {
            return Err(Error::Config("ajive resamples must be positive".into()));
        }
        Ok(())
    }

    /// Per-view selectors, if a reduction step is configured.
    pub(crate) fn selectors(&self, n_views: usize) -> Result<Option<Vec<RankSelector>>> {
        match (&self.per_view_ranks, self.variance_fraction) {
            (Some(ranks), _) => {
                if ranks.len() != n_views {
                    return Err(Error::Config(format!(
                        "{} per-view ranks given for {n_views} views",
                        ranks.len()
                    )));
                }
                Ok(Some(ranks.iter().map(|&m| RankSelector::Fixed(m)).collect()))
            }
            (None, Some(p)) => Ok(Some(vec![RankSelector::VarianceFraction(p); n_views])),
            (None, None) => Ok(None),
        }
    }
}

/// Provenance of one merged component.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ComponentLabel {
    Joint(usize),
    Individual { view: String, index: usize },
    Factor(usize),
}

impl fmt::Display for ComponentLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ComponentLabel::Joint(j) => write!(f, "Joint{}", j + 1),
            ComponentLabel::Individual { view, index } => write!(f, "{view}_Ind{}", index + 1),
            ComponentLabel::Factor(j) => write!(f, "Factor{}", j + 1),
        }
    }
}

/// Feature × component weights of one view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightTable {
    pub view: String,
    pub feature_names: Vec<String>,
    pub weights: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergedRepresentation {
    pub sample_ids: Vec<String>,
    pub scores: Array2<f64>,
    pub component_labels: Vec<ComponentLabel>,
    pub view_names: Vec<String>,
    pub weight_tables: Vec<WeightTable>,
    /// Components × views, R² of each component's rank-1 reconstruction.
    pub variance_explained: Array2<f64>,
}

impl MergedRepresentation {
    pub fn n_components(&self) -> usize {
        self.scores.ncols()
    }

    pub fn component_names(&self) -> Vec<String> {
        self.component_labels.iter().map(ToString::to_string).collect()
    }
}

/// Which (sample, view) cells are observed. Rows follow the datasets'
/// shared sample order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservedMask {
    observed: Array2<bool>,
}

impl ObservedMask {
    pub fn all_observed(n_samples: usize, n_views: usize) -> Self {
        Self {
            observed: Array2::from_elem((n_samples, n_views), true),
        }
    }

    pub fn from_rows(rows: &[Vec<bool>]) -> Result<Self> {
        let n_views = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_views) {
            return Err(Error::Schema("ragged observation mask".into()));
        }
        let flat: Vec<bool> = rows.iter().flatten().copied().collect();
        Ok(Self {
            observed: Array2::from_shape_vec((rows.len(), n_views), flat)
                .expect("shape checked"),
        })
    }

    pub fn n_samples(&self) -> usize {
        self.observed.nrows()
    }

    pub fn n_views(&self) -> usize {
        self.observed.ncols()
    }

    pub fn is_observed(&self, sample: usize, view: usize) -> bool {
        self.observed[[sample, view]]
    }

    pub fn is_complete(&self) -> bool {
        self.observed.iter().all(|&b| b)
    }

    pub fn observed_rows(&self, view: usize) -> Vec<usize> {
        (0..self.n_samples()).filter(|&n| self.observed[[n, view]]).collect()
    }

    pub fn pattern(&self, sample: usize) -> Vec<bool> {
        self.observed.row(sample).to_vec()
    }
}

/// Expands datasets to the union of their sample ids (sorted), filling
/// unobserved rows with zeros and reporting the observation mask.
pub fn union_with_mask(datasets: &[ModalityDataset]) -> Result<(Vec<ModalityDataset>, ObservedMask)> {
    if datasets.is_empty() {
        return Err(Error::Config("no datasets to integrate".into()));
    }
    let ids: Vec<String> = datasets
        .iter()
        .flat_map(|d| d.sample_ids().iter().cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut rows = vec![vec![false; datasets.len()]; ids.len()];
    let mut out = Vec::with_capacity(datasets.len());
    for (v, ds) in datasets.iter().enumerate() {
        let index = ds.id_index();
        let mut values = Array2::zeros((ids.len(), ds.n_features()));
        for (n, id) in ids.iter().enumerate() {
            if let Some(&r) = index.get(id.as_str()) {
                values.row_mut(n).assign(&ds.values().row(r));
                rows[n][v] = true;
            }
        }
        out.push(ModalityDataset::new(
            ds.name.clone(),
            ids.clone(),
            ds.feature_names().to_vec(),
            values,
        )?);
    }
    Ok((out, ObservedMask::from_rows(&rows)?))
}

/// Training-time schema and centering of one view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct ViewSchema {
    pub name: String,
    pub feature_names: Vec<String>,
    pub means: Array1<f64>,
}

impl ViewSchema {
    pub fn check(&self, ds: &ModalityDataset) -> Result<()> {
        if ds.name != self.name || ds.feature_names() != self.feature_names.as_slice() {
            return Err(Error::Schema(format!(
                "view `{}` does not match the training view `{}`",
                ds.name, self.name
            )));
        }
        Ok(())
    }

    pub fn centered(&self, ds: &ModalityDataset) -> Result<Array2<f64>> {
        self.check(ds)?;
        Ok(linalg::center_columns(ds.values(), self.means.view()))
    }
}

pub(crate) fn check_aligned(datasets: &[ModalityDataset]) -> Result<()> {
    let first = datasets.first().ok_or(Error::EmptyInput)?;
    if datasets.iter().any(|d| d.sample_ids() != first.sample_ids()) {
        return Err(Error::Alignment);
    }
    let mut names = BTreeSet::new();
    if datasets.iter().any(|d| !names.insert(d.name.as_str())) {
        return Err(Error::Schema("view names must be unique".into()));
    }
    Ok(())
}

/// Resolves the per-view signal ranks from fixed values or a variance target.
pub(crate) fn resolve_ranks(views: &[ArrayView2<f64>], selectors: &[RankSelector]) -> Result<Vec<usize>> {
    views
        .iter()
        .zip(selectors)
        .map(|(y, sel)| match *sel {
            RankSelector::Fixed(m) => Ok(m),
            RankSelector::VarianceFraction(_) => Ok(pca::pca_matrix(*y, *sel)?.0.n_components()),
        })
        .collect()
}

/// R² of the rank-1 reconstruction `score · weightᵀ` of a centered view,
/// restricted to `rows` when given.
pub(crate) fn rank_one_r2(
    y: ArrayView2<f64>,
    score: ArrayView1<f64>,
    weight: ArrayView1<f64>,
    rows: Option<&[usize]>,
) -> f64 {
    let (total, cross, score_sq) = match rows {
        None => (
            linalg::frobenius_sq(y),
            score.dot(&y.dot(&weight)),
            score.dot(&score),
        ),
        Some(rows) => {
            let mut total = 0.0;
            let mut cross = 0.0;
            let mut score_sq = 0.0;
            for &n in rows {
                let yrow = y.row(n);
                total += yrow.dot(&yrow);
                cross += score[n] * yrow.dot(&weight);
                score_sq += score[n] * score[n];
            }
            (total, cross, score_sq)
        }
    };
    if total <= 0.0 {
        return 0.0;
    }
    (2.0 * cross - score_sq * weight.dot(&weight)) / total
}

/// Components × views variance-explained table for any scores/weights pair.
///
/// `weights[i]` is the D_i × K weight matrix of view `i`; `views[i]` the
/// centered data. `mask` restricts each view to its observed rows.
pub fn variance_explained_table(
    scores: ArrayView2<f64>,
    weights: &[Array2<f64>],
    views: &[Array2<f64>],
    mask: Option<&ObservedMask>,
) -> Result<Array2<f64>> {
    if weights.len() != views.len() {
        return Err(Error::Schema("one weight matrix per view is required".into()));
    }
    let k = scores.ncols();
    let mut table = Array2::zeros((k, views.len()));
    for (i, (w, y)) in weights.iter().zip(views).enumerate() {
        if w.ncols() != k || w.nrows() != y.ncols() || y.nrows() != scores.nrows() {
            return Err(Error::Schema(format!("view {i}: weight/score shapes disagree")));
        }
        let rows = mask.map(|m| m.observed_rows(i));
        for c in 0..k {
            table[[c, i]] = rank_one_r2(y.view(), scores.column(c), w.column(c), rows.as_deref());
        }
    }
    Ok(table)
}

/// Column order by descending summed variance explained (stable).
pub(crate) fn order_by_variance(r2: ArrayView2<f64>) -> Vec<usize> {
    let totals: Vec<f64> = r2.axis_iter(Axis(0)).map(|row| row.sum()).collect();
    let mut order: Vec<usize> = (0..totals.len()).collect();
    order.sort_by(|&a, &b| totals[b].total_cmp(&totals[a]).then(a.cmp(&b)));
    order
}

/// +1/-1 per column so that the largest-magnitude entry of the stacked
/// weights is positive.
pub(crate) fn sign_by_weights(weights: &[&Array2<f64>], k: usize) -> Vec<f64> {
    (0..k)
        .map(|c| {
            let stacked: Array1<f64> = weights
                .iter()
                .flat_map(|w| w.column(c).to_vec())
                .collect();
            match linalg::argmax_abs(stacked.view()) {
                Some(i) if stacked[i] < 0.0 => -1.0,
                _ => 1.0,
            }
        })
        .collect()
}

/// Reorders and sign-flips columns of a matrix in place.
pub(crate) fn permute_columns(m: &Array2<f64>, order: &[usize], signs: &[f64]) -> Array2<f64> {
    let mut out = m.select(Axis(1), order);
    for (mut col, &s) in out.columns_mut().into_iter().zip(signs) {
        if s < 0.0 {
            col.mapv_inplace(|x| -x);
        }
    }
    out
}

/// A fitted integration that can project new samples without refitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FittedIntegration {
    Early(EarlyFusionModel),
    Ajive(AjiveModel),
    Gfa(GfaModel),
}

impl FittedIntegration {
    /// Scores for new, aligned datasets (same view order as training).
    /// Only GFA accepts a mask with missing views.
    pub fn project_new(&self, datasets: &[ModalityDataset], mask: Option<&ObservedMask>) -> Result<Array2<f64>> {
        let partial = mask.is_some_and(|m| !m.is_complete());
        match self {
            FittedIntegration::Early(m) => {
                if partial {
                    return Err(Error::MissingViewUnsupported("early fusion".into()));
                }
                m.project(datasets)
            }
            FittedIntegration::Ajive(m) => {
                if partial {
                    return Err(Error::MissingViewUnsupported("AJIVE".into()));
                }
                m.project(datasets)
            }
            FittedIntegration::Gfa(m) => m.project(datasets, mask),
        }
    }

    pub fn supports_missing_views(&self) -> bool {
        matches!(self, FittedIntegration::Gfa(_))
    }
}

/// Dispatches on `config.method`. `mask` is honoured by GFA only; any other
/// method rejects a mask with unobserved cells.
pub fn fit_integration(
    datasets: &[ModalityDataset],
    config: &IntegrationConfig,
    mask: Option<&ObservedMask>,
) -> Result<(FittedIntegration, MergedRepresentation)> {
    let partial = mask.is_some_and(|m| !m.is_complete());
    match config.method {
        Method::Early | Method::EarlyPca => {
            if partial {
                return Err(Error::MissingViewUnsupported("early fusion".into()));
            }
            let (m, rep) = early_fusion(datasets, config)?;
            Ok((FittedIntegration::Early(m), rep))
        }
        Method::Ajive => {
            if partial {
                return Err(Error::MissingViewUnsupported("AJIVE".into()));
            }
            let (m, rep) = ajive_fit(datasets, config)?;
            Ok((FittedIntegration::Ajive(m), rep))
        }
        Method::Gfa => {
            let (m, rep) = gfa_fit(datasets, config, mask)?;
            Ok((FittedIntegration::Gfa(m), rep))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn labels_render() {
        assert_eq!(ComponentLabel::Joint(0).to_string(), "Joint1");
        assert_eq!(
            ComponentLabel::Individual { view: "ecg".into(), index: 2 }.to_string(),
            "ecg_Ind3"
        );
        assert_eq!(ComponentLabel::Factor(9).to_string(), "Factor10");
    }

    #[test]
    fn config_requires_one_selector() {
        let mut c = IntegrationConfig::new(Method::Ajive);
        assert!(c.validate().is_err());
        c.per_view_ranks = Some(vec![2, 2]);
        assert!(c.validate().is_ok());
        c.variance_fraction = Some(0.8);
        assert!(c.validate().is_err());
        let c = IntegrationConfig::new(Method::Gfa);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn zero_weights_explain_nothing() {
        let y = array![[1.0, 2.0], [-1.0, -2.0]];
        let s = array![[1.0], [-1.0]];
        let w = Array2::zeros((2, 1));
        let t = variance_explained_table(s.view(), &[w], &[y], None).unwrap();
        assert_eq!(t[[0, 0]], 0.0);
    }

    #[test]
    fn exact_rank_one_explains_everything() {
        let z = array![1.0, -2.0, 0.5, 0.5];
        let w = array![2.0, -1.0, 3.0];
        let y = Array2::from_shape_fn((4, 3), |(i, j)| z[i] * w[j]);
        let t = variance_explained_table(
            z.view().insert_axis(Axis(1)),
            &[w.clone().insert_axis(Axis(1))],
            &[y],
            None,
        )
        .unwrap();
        assert!((t[[0, 0]] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn union_mask_marks_missing() {
        let a = ModalityDataset::new("a", vec!["s1".into(), "s2".into()], vec!["x".into()], array![[1.0], [2.0]]).unwrap();
        let b = ModalityDataset::new("b", vec!["s2".into(), "s3".into()], vec!["y".into()], array![[5.0], [6.0]]).unwrap();
        let (views, mask) = union_with_mask(&[a, b]).unwrap();
        assert_eq!(views[0].sample_ids(), &["s1", "s2", "s3"]);
        assert!(mask.is_observed(0, 0) && !mask.is_observed(0, 1));
        assert!(!mask.is_observed(2, 0) && mask.is_observed(2, 1));
        assert_eq!(views[1].values()[[1, 0]], 5.0);
        assert_eq!(views[1].values()[[0, 0]], 0.0);
    }
}
