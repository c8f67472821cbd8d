//! Angle-based joint and individual variation explained.
//!
//! Each view `Y_i` (N × D_i, centered) is split as
//! `Y_i = S·U_iᵀ + S_i·V_iᵀ + R_i` where `S` (N × M) is shared by all views
//! and every `S_i` is orthogonal to `S`.
//!
//! 1. Per-view thin SVD truncated at the signal rank `m_i`.
//! 2. SVD of the column-stacked score bases; joint directions are the
//!    stacked singular values whose square exceeds both the random-direction
//!    bound and the Wedin bound.
//! 3. The per-view signal with the joint space projected out gives the
//!    individual components, thresholded at the per-view signal cut.

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{
    check_aligned, order_by_variance, permute_columns, resolve_ranks, sign_by_weights,
    variance_explained_table, ComponentLabel, IntegrationConfig, MergedRepresentation, ViewSchema,
    WeightTable,
};
use crate::data::ModalityDataset;
use crate::error::{Error, Result};
use crate::linalg;

/// Tolerance on the squared stacked singular value comparison; exact joint
/// structure sits right on the Wedin bound.
const JOINT_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AjiveDecomposition {
    /// N × M, orthonormal columns.
    pub joint_scores: Array2<f64>,
    /// Per view D_i × M, so that `J_i = S · U_iᵀ`.
    pub joint_weights: Vec<Array2<f64>>,
    /// Per view N × M_i, orthonormal and orthogonal to the joint scores.
    pub individual_scores: Vec<Array2<f64>>,
    /// Per view D_i × M_i, so that `I_i = S_i · V_iᵀ`.
    pub individual_weights: Vec<Array2<f64>>,
    pub joint_rank: usize,
    pub individual_ranks: Vec<usize>,
}

impl AjiveDecomposition {
    pub fn joint_matrix(&self, view: usize) -> Array2<f64> {
        self.joint_scores.dot(&self.joint_weights[view].t())
    }

    pub fn individual_matrix(&self, view: usize) -> Array2<f64> {
        self.individual_scores[view].dot(&self.individual_weights[view].t())
    }

    /// `R_i = Y_i − J_i − I_i` for the centered training view.
    pub fn residual(&self, view: usize, centered: ArrayView2<f64>) -> Array2<f64> {
        &centered - &self.joint_matrix(view) - &self.individual_matrix(view)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AjiveThresholds {
    /// Percentile of the largest squared singular value of stacked random subspaces.
    pub random_direction: f64,
    /// `n_views − Σ sin²θ_i` with θ_i the Wedin perturbation-angle bounds.
    pub wedin: f64,
    pub wedin_angles: Vec<f64>,
    /// Per-view singular-value cut used for the individual ranks.
    pub individual_sv: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AjiveModel {
    views: Vec<ViewSchema>,
    pub signal_ranks: Vec<usize>,
    pub stacked_singular_values: Array1<f64>,
    pub thresholds: AjiveThresholds,
    pub decomposition: AjiveDecomposition,
    /// Per view D_i × m_i: maps centered rows to the normalized signal basis.
    signal_maps: Vec<Array2<f64>>,
    /// Per view D_i × m_i right singular vectors of the signal.
    signal_rows: Vec<Array2<f64>>,
    /// Σm × M: stacked basis → joint scores.
    joint_map: Array2<f64>,
    /// Per view M × D_i: joint part of the signal, `Sᵀ P_i`.
    joint_signal: Vec<Array2<f64>>,
    /// Per view D_i × M_i: individual signal → individual scores.
    individual_maps: Vec<Array2<f64>>,
}

impl AjiveModel {
    pub fn joint_rank(&self) -> usize {
        self.decomposition.joint_rank
    }

    pub fn individual_ranks(&self) -> &[usize] {
        &self.decomposition.individual_ranks
    }

    pub fn view_names(&self) -> Vec<String> {
        self.views.iter().map(|v| v.name.clone()).collect()
    }

    /// Centered training-scale copies of the given datasets.
    pub fn centered_views(&self, datasets: &[ModalityDataset]) -> Result<Vec<Array2<f64>>> {
        if datasets.len() != self.views.len() {
            return Err(Error::Schema(format!(
                "AJIVE model has {} views, got {}",
                self.views.len(),
                datasets.len()
            )));
        }
        datasets
            .iter()
            .zip(&self.views)
            .map(|(ds, v)| v.centered(ds))
            .collect()
    }

    /// Per-component, per-view R² of the decomposition on `datasets`
    /// (rows must be the training samples).
    pub fn variance_explained(&self, datasets: &[ModalityDataset]) -> Result<Array2<f64>> {
        let centered = self.centered_views(datasets)?;
        let (scores, weights) = self.merged_scores_and_weights();
        if scores.nrows() != datasets[0].n_samples() {
            return Err(Error::Schema("variance explained needs the training samples".into()));
        }
        variance_explained_table(scores.view(), &weights, &centered, None)
    }

    fn merged_scores_and_weights(&self) -> (Array2<f64>, Vec<Array2<f64>>) {
        let d = &self.decomposition;
        let n = d.joint_scores.nrows();
        let mut blocks = vec![d.joint_scores.view()];
        blocks.extend(d.individual_scores.iter().map(|s| s.view()));
        let scores = concatenate(Axis(1), &blocks).unwrap_or_else(|_| Array2::zeros((n, 0)));
        let k = scores.ncols();
        let mut weights = Vec::with_capacity(self.views.len());
        let mut offset = d.joint_rank;
        for (i, v) in self.views.iter().enumerate() {
            let mut w = Array2::zeros((v.feature_names.len(), k));
            w.slice_mut(s![.., ..d.joint_rank]).assign(&d.joint_weights[i]);
            let mi = d.individual_ranks[i];
            w.slice_mut(s![.., offset..offset + mi]).assign(&d.individual_weights[i]);
            offset += mi;
            weights.push(w);
        }
        (scores, weights)
    }

    /// Merged scores `[S | S_1 | … | S_n]` for new samples observing every view.
    pub fn project(&self, datasets: &[ModalityDataset]) -> Result<Array2<f64>> {
        let centered = self.centered_views(datasets)?;
        check_aligned(datasets)?;
        let n = datasets[0].n_samples();
        let bases: Vec<Array2<f64>> = centered
            .iter()
            .zip(&self.signal_maps)
            .map(|(y, m)| y.dot(m))
            .collect();
        let stacked = hstack(&bases, n);
        let joint = stacked.dot(&self.joint_map);
        let mut blocks = vec![joint.clone()];
        for i in 0..self.views.len() {
            let signal = centered[i].dot(&self.signal_rows[i]).dot(&self.signal_rows[i].t());
            let individual_signal = signal - joint.dot(&self.joint_signal[i]);
            blocks.push(individual_signal.dot(&self.individual_maps[i]));
        }
        Ok(hstack(&blocks, n))
    }
}

fn hstack(blocks: &[Array2<f64>], n: usize) -> Array2<f64> {
    let views: Vec<ArrayView2<f64>> = blocks.iter().map(|b| b.view()).collect();
    concatenate(Axis(1), &views).unwrap_or_else(|_| Array2::zeros((n, 0)))
}

/// Linear-interpolated quantile of unsorted samples.
pub(crate) fn quantile(samples: &mut [f64], q: f64) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.sort_by(f64::total_cmp);
    let pos = q * (samples.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    samples[lo] + (samples[hi] - samples[lo]) * (pos - lo as f64)
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(rng))
}

/// Uniformly random `dim`-dimensional orthonormal basis inside the
/// orthogonal complement of `basis` (orthonormal columns) in `R^rows`.
fn random_complement_basis(rng: &mut ChaCha8Rng, basis: ArrayView2<f64>, dim: usize) -> Option<Array2<f64>> {
    let rows = basis.nrows();
    if rows <= basis.ncols() || dim == 0 {
        return None;
    }
    let dim = dim.min(rows - basis.ncols());
    let g = gaussian_matrix(rng, rows, dim);
    let projected = &g - &basis.dot(&basis.t().dot(&g));
    Some(linalg::orthonormal_columns(projected.view()))
}

/// Wedin-bound samples for one view: spectral norms of the data restricted
/// to random subspaces of the residual column and row spaces.
fn wedin_angle(
    rng: &mut ChaCha8Rng,
    y: ArrayView2<f64>,
    u: ArrayView2<f64>,
    v: ArrayView2<f64>,
    smallest_signal_sv: f64,
    resamples: usize,
    percentile: f64,
) -> f64 {
    let rank = u.ncols();
    let mut col_norms = Vec::with_capacity(resamples);
    let mut row_norms = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        col_norms.push(
            random_complement_basis(rng, u, rank)
                .map_or(0.0, |w| linalg::spectral_norm(y.t().dot(&w).view())),
        );
        row_norms.push(
            random_complement_basis(rng, v, rank)
                .map_or(0.0, |w| linalg::spectral_norm(y.dot(&w).view())),
        );
    }
    let bound = quantile(&mut col_norms, percentile).max(quantile(&mut row_norms, percentile));
    (bound / smallest_signal_sv).min(1.0).asin()
}

/// Percentile of the largest squared singular value of `n` stacked random
/// orthonormal bases with the given dimensions.
fn random_direction_bound(rng: &mut ChaCha8Rng, n: usize, ranks: &[usize], resamples: usize, percentile: f64) -> f64 {
    let mut samples = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let bases: Vec<Array2<f64>> = ranks
            .iter()
            .map(|&m| linalg::orthonormal_columns(gaussian_matrix(rng, n, m).view()))
            .collect();
        let stacked = hstack(&bases, n);
        samples.push(linalg::max_eigenvalue(stacked.t().dot(&stacked).view()));
    }
    quantile(&mut samples, percentile)
}

/// Fits AJIVE on aligned views. Signal ranks come from the config's fixed
/// ranks or variance fraction.
pub fn ajive_fit(
    datasets: &[ModalityDataset],
    config: &IntegrationConfig,
) -> Result<(AjiveModel, MergedRepresentation)> {
    config.validate()?;
    if datasets.len() < 2 {
        return Err(Error::Config("AJIVE needs at least two views".into()));
    }
    check_aligned(datasets)?;
    let n = datasets[0].n_samples();
    let n_views = datasets.len();
    let schemas: Vec<ViewSchema> = datasets
        .iter()
        .map(|ds| ViewSchema {
            name: ds.name.clone(),
            feature_names: ds.feature_names().to_vec(),
            means: linalg::column_means(ds.values()),
        })
        .collect();
    let centered: Vec<Array2<f64>> = datasets
        .iter()
        .zip(&schemas)
        .map(|(ds, s)| linalg::center_columns(ds.values(), s.means.view()))
        .collect();

    let selectors = config
        .selectors(n_views)?
        .ok_or_else(|| Error::Config("AJIVE needs per-view ranks or a variance fraction".into()))?;
    let views: Vec<ArrayView2<f64>> = centered.iter().map(|c| c.view()).collect();
    let ranks = resolve_ranks(&views, &selectors)?;
    for (ds, &m) in datasets.iter().zip(&ranks) {
        if m > n.min(ds.n_features()) {
            return Err(Error::Rank(format!(
                "view `{}`: signal rank {m} exceeds min(N={n}, D={})",
                ds.name,
                ds.n_features()
            )));
        }
    }
    let total: usize = ranks.iter().sum();
    if total > n {
        return Err(Error::Rank(format!(
            "total signal rank {total} exceeds the {n} available samples"
        )));
    }

    // Step 1: per-view signal subspaces.
    let mut signal_u = Vec::with_capacity(n_views);
    let mut signal_v = Vec::with_capacity(n_views);
    let mut signal_s = Vec::with_capacity(n_views);
    let mut sv_cuts = Vec::with_capacity(n_views);
    for (i, y) in centered.iter().enumerate() {
        let m = ranks[i];
        let svd = linalg::thin_svd(y.view())?;
        let smallest = svd.s[m - 1];
        if !(smallest > 1e-12 * svd.s[0].max(f64::MIN_POSITIVE)) {
            return Err(Error::Rank(format!(
                "view `{}` has numerical rank below its signal rank {m}",
                datasets[i].name
            )));
        }
        let next = if m < svd.s.len() { svd.s[m] } else { 0.0 };
        sv_cuts.push(0.5 * (smallest + next));
        signal_u.push(svd.u.slice(s![.., ..m]).to_owned());
        signal_v.push(svd.v.slice(s![.., ..m]).to_owned());
        signal_s.push(svd.s.slice(s![..m]).to_owned());
    }

    // Step 2: joint rank from the stacked bases.
    let stacked = hstack(&signal_u, n);
    let stacked_svd = linalg::thin_svd(stacked.view())?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let random_bound = random_direction_bound(
        &mut rng,
        n,
        &ranks,
        config.ajive_resamples,
        config.ajive_percentile,
    );
    let wedin_angles: Vec<f64> = (0..n_views)
        .map(|i| {
            wedin_angle(
                &mut rng,
                centered[i].view(),
                signal_u[i].view(),
                signal_v[i].view(),
                signal_s[i][ranks[i] - 1],
                config.ajive_resamples,
                config.ajive_percentile,
            )
        })
        .collect();
    let wedin_bound = n_views as f64 - wedin_angles.iter().map(|a| a.sin().powi(2)).sum::<f64>();
    let cut = random_bound.max(wedin_bound) - JOINT_SLACK;
    let max_joint = *ranks.iter().min().expect("at least two views");
    let joint_rank = stacked_svd
        .s
        .iter()
        .take_while(|&&sv| sv * sv > cut)
        .count()
        .min(max_joint);

    let joint_raw = stacked_svd.u.slice(s![.., ..joint_rank]).to_owned();
    let joint_map_raw = {
        let inv = stacked_svd.s.slice(s![..joint_rank]).mapv(|x| 1.0 / x);
        let mut m = stacked_svd.v.slice(s![.., ..joint_rank]).to_owned();
        for (mut col, d) in m.columns_mut().into_iter().zip(inv.iter()) {
            col *= *d;
        }
        m
    };

    // Order and orient the joint directions.
    let joint_weights_raw: Vec<Array2<f64>> = centered.iter().map(|y| y.t().dot(&joint_raw)).collect();
    let joint_r2 = variance_explained_table(joint_raw.view(), &joint_weights_raw, &centered, None)?;
    let order = order_by_variance(joint_r2.view());
    let reordered: Vec<Array2<f64>> = joint_weights_raw.iter().map(|w| w.select(Axis(1), &order)).collect();
    let signs = sign_by_weights(&reordered.iter().collect::<Vec<_>>(), joint_rank);
    let joint_scores = permute_columns(&joint_raw, &order, &signs);
    let joint_map = permute_columns(&joint_map_raw, &order, &signs);
    let joint_weights: Vec<Array2<f64>> = joint_weights_raw
        .iter()
        .map(|w| permute_columns(w, &order, &signs))
        .collect();

    // Step 3: individual components.
    let mut signal_maps = Vec::with_capacity(n_views);
    let mut joint_signal = Vec::with_capacity(n_views);
    let mut individual_scores = Vec::with_capacity(n_views);
    let mut individual_weights = Vec::with_capacity(n_views);
    let mut individual_maps = Vec::with_capacity(n_views);
    let mut individual_ranks = Vec::with_capacity(n_views);
    for i in 0..n_views {
        let mut map = signal_v[i].clone();
        for (mut col, sv) in map.columns_mut().into_iter().zip(signal_s[i].iter()) {
            col /= *sv;
        }
        signal_maps.push(map);

        let mut scaled_u = signal_u[i].clone();
        for (mut col, sv) in scaled_u.columns_mut().into_iter().zip(signal_s[i].iter()) {
            col *= *sv;
        }
        let signal = scaled_u.dot(&signal_v[i].t());
        let c = joint_scores.t().dot(&signal);
        let residual_signal = &signal - &joint_scores.dot(&c);
        joint_signal.push(c);

        let svd = linalg::thin_svd(residual_signal.view())?;
        let rank_i = svd
            .s
            .iter()
            .take_while(|&&sv| sv > sv_cuts[i])
            .count()
            .min(ranks[i]);
        let s_raw = svd.u.slice(s![.., ..rank_i]).to_owned();
        let w_raw = residual_signal.t().dot(&s_raw);
        let mut map_raw = svd.v.slice(s![.., ..rank_i]).to_owned();
        for (mut col, sv) in map_raw.columns_mut().into_iter().zip(svd.s.iter()) {
            col /= *sv;
        }
        let r2 = variance_explained_table(s_raw.view(), &[w_raw.clone()], &[centered[i].clone()], None)?;
        let order = order_by_variance(r2.view());
        let ordered_w = w_raw.select(Axis(1), &order);
        let signs = sign_by_weights(&[&ordered_w], rank_i);
        individual_scores.push(permute_columns(&s_raw, &order, &signs));
        individual_weights.push(permute_columns(&w_raw, &order, &signs));
        individual_maps.push(permute_columns(&map_raw, &order, &signs));
        individual_ranks.push(rank_i);
    }

    let decomposition = AjiveDecomposition {
        joint_scores,
        joint_weights,
        individual_scores,
        individual_weights,
        joint_rank,
        individual_ranks,
    };
    let model = AjiveModel {
        views: schemas,
        signal_ranks: ranks,
        stacked_singular_values: stacked_svd.s.clone(),
        thresholds: AjiveThresholds {
            random_direction: random_bound,
            wedin: wedin_bound,
            wedin_angles,
            individual_sv: sv_cuts,
        },
        decomposition,
        signal_maps,
        signal_rows: signal_v,
        joint_map,
        joint_signal,
        individual_maps,
    };

    let (scores, weights) = model.merged_scores_and_weights();
    let variance_explained = variance_explained_table(scores.view(), &weights, &centered, None)?;
    let mut labels: Vec<ComponentLabel> = (0..joint_rank).map(ComponentLabel::Joint).collect();
    for (ds, &mi) in datasets.iter().zip(&model.decomposition.individual_ranks) {
        labels.extend((0..mi).map(|index| ComponentLabel::Individual {
            view: ds.name.clone(),
            index,
        }));
    }
    let rep = MergedRepresentation {
        sample_ids: datasets[0].sample_ids().to_vec(),
        scores,
        component_labels: labels,
        view_names: datasets.iter().map(|d| d.name.clone()).collect(),
        weight_tables: datasets
            .iter()
            .zip(weights)
            .map(|(ds, w)| WeightTable {
                view: ds.name.clone(),
                feature_names: ds.feature_names().to_vec(),
                weights: w,
            })
            .collect(),
        variance_explained,
    };
    Ok((model, rep))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integration::Method;

    fn rank_two_view(name: &str, n: usize) -> ModalityDataset {
        let values = Array2::from_shape_fn((n, 4), |(i, j)| {
            let a = ((i * 7 + 3) % 11) as f64 - 5.0;
            let b = ((i * 5 + 1) % 13) as f64 - 6.0;
            a * (j as f64 + 1.0) + b * (2.0 - j as f64)
        });
        let ids = (0..n).map(|i| format!("s{i:03}")).collect();
        let feats = (0..4).map(|j| format!("{name}{j}")).collect();
        ModalityDataset::new(name, ids, feats, values).unwrap()
    }

    fn config(ranks: Vec<usize>) -> IntegrationConfig {
        let mut c = IntegrationConfig::new(Method::Ajive);
        c.per_view_ranks = Some(ranks);
        c.ajive_resamples = 200;
        c
    }

    #[test]
    fn identical_views_are_fully_joint() {
        let a = rank_two_view("a", 40);
        let mut b = a.clone();
        b.name = "b".into();
        let (model, rep) = ajive_fit(&[a.clone(), b], &config(vec![2, 2])).unwrap();
        assert_eq!(model.joint_rank(), 2);
        assert_eq!(model.individual_ranks(), &[0, 0]);
        assert_eq!(rep.n_components(), 2);
        let y = linalg::center_columns(a.values(), linalg::column_means(a.values()).view());
        let r = model.decomposition.residual(0, y.view());
        assert!(linalg::frobenius_sq(r.view()).sqrt() / linalg::frobenius_sq(y.view()).sqrt() < 1e-8);
    }

    #[test]
    fn rank_errors() {
        let a = rank_two_view("a", 6);
        let mut b = a.clone();
        b.name = "b".into();
        assert!(matches!(ajive_fit(&[a.clone(), b.clone()], &config(vec![5, 1])), Err(Error::Rank(_))));
        assert!(matches!(ajive_fit(&[a.clone(), b.clone()], &config(vec![4, 4])), Err(Error::Rank(_))));
        assert!(matches!(ajive_fit(&[a], &config(vec![2])), Err(Error::Config(_))));
    }

    #[test]
    fn quantile_interpolates() {
        let mut v = vec![3.0, 1.0, 2.0, 4.0];
        assert!((quantile(&mut v, 0.5) - 2.5).abs() < 1e-15);
        assert_eq!(quantile(&mut v, 1.0), 4.0);
    }
}
