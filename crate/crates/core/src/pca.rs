//! Principal component analysis by thin SVD of the centered matrix.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::ModalityDataset;
use crate::error::{Error, Result};
use crate::linalg;

/// How many components to keep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RankSelector {
    Fixed(usize),
    /// Smallest count whose cumulative explained-variance ratio reaches the fraction.
    VarianceFraction(f64),
}

impl RankSelector {
    pub fn validate(&self) -> Result<()> {
        match *self {
            RankSelector::Fixed(0) => Err(Error::Config("rank must be positive".into())),
            RankSelector::VarianceFraction(p) if !(p > 0.0 && p <= 1.0) => Err(Error::Config(
                format!("variance fraction must lie in (0, 1], got {p}"),
            )),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub means: Array1<f64>,
    /// D × m, orthonormal columns.
    pub components: Array2<f64>,
    pub explained_variance: Array1<f64>,
    pub explained_variance_ratio: Array1<f64>,
}

impl PcaModel {
    pub fn n_components(&self) -> usize {
        self.components.ncols()
    }

    pub fn transform(&self, values: ArrayView2<f64>) -> Result<Array2<f64>> {
        if values.ncols() != self.means.len() {
            return Err(Error::Schema(format!(
                "PCA expects {} features, got {}",
                self.means.len(),
                values.ncols()
            )));
        }
        Ok(linalg::center_columns(values, self.means.view()).dot(&self.components))
    }
}

/// Number of leading ratios needed to reach `fraction` cumulatively.
pub(crate) fn count_for_fraction(ratios: &[f64], fraction: f64) -> usize {
    let mut cum = 0.0;
    for (k, r) in ratios.iter().enumerate() {
        cum += r;
        if cum >= fraction - 1e-12 {
            return k + 1;
        }
    }
    ratios.len()
}

/// Fits PCA and returns the model with the N × m score matrix.
pub fn pca(dataset: &ModalityDataset, selector: RankSelector) -> Result<(PcaModel, Array2<f64>)> {
    pca_matrix(dataset.values(), selector)
}

pub(crate) fn pca_matrix(values: ArrayView2<f64>, selector: RankSelector) -> Result<(PcaModel, Array2<f64>)> {
    selector.validate()?;
    let (n, d) = values.dim();
    if n == 0 || d == 0 {
        return Err(Error::EmptyInput);
    }
    let means = linalg::column_means(values);
    let centered = linalg::center_columns(values, means.view());
    let total_ss = linalg::frobenius_sq(centered.view());
    let raw_ss = linalg::frobenius_sq(values);
    if total_ss <= 1e-24 * (1.0 + raw_ss) {
        return Err(Error::DegenerateData("all features have zero variance".into()));
    }
    let svd = linalg::thin_svd(centered.view())?;
    let sq: Vec<f64> = svd.s.iter().map(|s| s * s).collect();
    let sum_sq: f64 = sq.iter().sum();
    let ratios: Vec<f64> = sq.iter().map(|s| s / sum_sq).collect();
    let max_rank = n.min(d);
    let m = match selector {
        RankSelector::Fixed(m) => {
            if m > max_rank {
                return Err(Error::Rank(format!(
                    "requested {m} components from a {n}x{d} matrix"
                )));
            }
            m
        }
        RankSelector::VarianceFraction(p) => count_for_fraction(&ratios, p),
    };
    let mut components = svd.v.slice(ndarray::s![.., ..m]).to_owned();
    for mut col in components.columns_mut() {
        if let Some(i) = linalg::argmax_abs(col.view()) {
            if col[i] < 0.0 {
                col.mapv_inplace(|x| -x);
            }
        }
    }
    let explained_variance = Array1::from_iter(sq[..m].iter().map(|s| s / n as f64));
    let explained_variance_ratio = Array1::from_iter(ratios[..m].iter().copied());
    let scores = centered.dot(&components);
    Ok((
        PcaModel {
            means,
            components,
            explained_variance,
            explained_variance_ratio,
        },
        scores,
    ))
}

/// Population variance of each score column.
pub fn score_variances(scores: ArrayView2<f64>) -> Array1<f64> {
    scores.var_axis(Axis(0), 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn dataset(values: Array2<f64>) -> ModalityDataset {
        let ids = (0..values.nrows()).map(|i| format!("s{i}")).collect();
        let feats = (0..values.ncols()).map(|j| format!("f{j}")).collect();
        ModalityDataset::new("x", ids, feats, values).unwrap()
    }

    #[test]
    fn diagonal_points_single_component() {
        let d = dataset(array![[1.0, 1.0], [-1.0, -1.0], [2.0, 2.0], [-2.0, -2.0]]);
        let (model, scores) = pca(&d, RankSelector::VarianceFraction(0.99)).unwrap();
        assert_eq!(model.n_components(), 1);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((model.components[[0, 0]] - h).abs() < 1e-12);
        assert!((model.components[[1, 0]] - h).abs() < 1e-12);
        assert!((model.explained_variance_ratio[0] - 1.0).abs() < 1e-12);
        assert!((scores[[2, 0]] - 2.0 * std::f64::consts::SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn independent_features_ratios() {
        // variances 3 and 1 along the axes, zero covariance
        let a = 3f64.sqrt();
        let d = dataset(array![[a, 1.0], [-a, 1.0], [a, -1.0], [-a, -1.0]]);
        let (model, _) = pca(&d, RankSelector::Fixed(2)).unwrap();
        assert!((model.explained_variance_ratio[0] - 0.75).abs() < 1e-12);
        assert!((model.explained_variance_ratio[1] - 0.25).abs() < 1e-12);
        assert!((model.explained_variance[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn eighty_percent_selector() {
        let a = 3f64.sqrt();
        let d = dataset(array![[a, 1.0], [-a, 1.0], [a, -1.0], [-a, -1.0]]);
        assert_eq!(pca(&d, RankSelector::VarianceFraction(0.80)).unwrap().0.n_components(), 2);
        assert_eq!(pca(&d, RankSelector::VarianceFraction(0.75)).unwrap().0.n_components(), 1);
    }

    #[test]
    fn degenerate_and_rank_errors() {
        let d = dataset(array![[1.0, 2.0], [1.0, 2.0]]);
        assert!(matches!(pca(&d, RankSelector::Fixed(1)), Err(Error::DegenerateData(_))));
        let d = dataset(array![[1.0, 2.0], [3.0, 1.0]]);
        assert!(matches!(pca(&d, RankSelector::Fixed(3)), Err(Error::Rank(_))));
        assert!(matches!(pca(&d, RankSelector::VarianceFraction(1.5)), Err(Error::Config(_))));
    }

    #[test]
    fn transform_matches_scores() {
        let d = dataset(array![[1.0, 0.3, 2.0], [0.2, 1.0, -1.0], [3.0, 0.1, 0.0], [-1.0, 2.0, 1.0]]);
        let (model, scores) = pca(&d, RankSelector::Fixed(2)).unwrap();
        let again = model.transform(d.values()).unwrap();
        assert!((&again - &scores).iter().all(|x| x.abs() < 1e-12));
    }
}
