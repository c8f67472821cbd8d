//! Group factor analysis with missing views, fitted by mean-field variational EM.
//!
//! Model, for each view `i` and observed sample `n`:
//!
//! ```text
//! y_n,i = W_i z_n + ε,   z_n ~ N(0, I),   ε_d ~ N(0, 1/τ_i,d)
//! W_i[d, k] ~ N(0, 1/α_i,k),   α, τ ~ Gamma(1e-3, 1e-3)
//! ```
//!
//! Updates cycle `q(Z) → q(W) → q(α) → q(τ)`; each is the exact coordinate
//! maximizer of the evidence lower bound, so the recorded bound never
//! decreases. Unobserved (sample, view) cells simply drop out of the
//! likelihood, which makes the posterior mean of `z_n` a latent imputation.

use std::collections::HashMap;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

use super::{
    check_aligned, order_by_variance, resolve_ranks, sign_by_weights, variance_explained_table,
    ComponentLabel, IntegrationConfig, MergedRepresentation, ObservedMask, ViewSchema, WeightTable,
};
use crate::data::ModalityDataset;
use crate::error::{Error, Result};
use crate::linalg;

const PRIOR_SHAPE: f64 = 1e-3;
const PRIOR_RATE: f64 = 1e-3;
const INIT_JITTER: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GfaModel {
    views: Vec<ViewSchema>,
    pub sample_ids: Vec<String>,
    /// N × K posterior means of the active factors.
    pub factors: Array2<f64>,
    /// Per view D_i × K posterior means.
    pub loadings: Vec<Array2<f64>>,
    /// Per view, per feature `1 / E[τ]`.
    pub noise_variances: Vec<Array1<f64>>,
    /// Views × K posterior means of the ARD precisions.
    pub factor_precisions: Array2<f64>,
    /// Per view `Σ_d E[τ_d] E[w_d w_dᵀ]`, the view's contribution to the
    /// factor posterior precision.
    view_precisions: Vec<Array2<f64>>,
    pub elbo_trace: Vec<f64>,
    /// Over the initial factors, in their initial order.
    pub active_factors: Vec<bool>,
    pub converged: bool,
    pub iterations: usize,
}

impl GfaModel {
    /// Builds a model directly from loadings and noise variances, treating
    /// the loadings as known (no posterior spread).
    pub fn from_parameters(
        views: &[(String, Vec<String>, Array1<f64>)],
        loadings: Vec<Array2<f64>>,
        noise_variances: Vec<Array1<f64>>,
    ) -> Result<Self> {
        if views.len() != loadings.len() || views.len() != noise_variances.len() {
            return Err(Error::Schema("one loading matrix and noise vector per view".into()));
        }
        let k = loadings.first().map_or(0, |w| w.ncols());
        let mut schemas = Vec::new();
        let mut view_precisions = Vec::new();
        for ((name, features, means), (w, noise)) in views.iter().zip(loadings.iter().zip(&noise_variances)) {
            if w.nrows() != features.len() || noise.len() != features.len() || means.len() != features.len() || w.ncols() != k {
                return Err(Error::Schema(format!("view `{name}`: parameter shapes disagree")));
            }
            if noise.iter().any(|&v| !(v > 0.0)) {
                return Err(Error::Config("noise variances must be positive".into()));
            }
            let mut t = Array2::zeros((k, k));
            for (row, &var) in w.rows().into_iter().zip(noise.iter()) {
                let outer = row.to_owned().insert_axis(Axis(1)).dot(&row.insert_axis(Axis(0)));
                t.scaled_add(1.0 / var, &outer);
            }
            view_precisions.push(t);
            schemas.push(ViewSchema {
                name: name.clone(),
                feature_names: features.clone(),
                means: means.clone(),
            });
        }
        Ok(Self {
            views: schemas,
            sample_ids: Vec::new(),
            factors: Array2::zeros((0, k)),
            loadings,
            noise_variances,
            factor_precisions: Array2::ones((views.len(), k)),
            view_precisions,
            elbo_trace: Vec::new(),
            active_factors: vec![true; k],
            converged: true,
            iterations: 0,
        })
    }

    pub fn n_factors(&self) -> usize {
        self.loadings.first().map_or(0, |w| w.ncols())
    }

    pub fn view_names(&self) -> Vec<String> {
        self.views.iter().map(|v| v.name.clone()).collect()
    }

    fn noise_precision(&self, view: usize) -> Array1<f64> {
        self.noise_variances[view].mapv(|v| 1.0 / v)
    }

    /// Posterior means of the factors for aligned datasets under `mask`.
    pub fn project(&self, datasets: &[ModalityDataset], mask: Option<&ObservedMask>) -> Result<Array2<f64>> {
        if datasets.len() != self.views.len() {
            return Err(Error::Schema(format!(
                "GFA model has {} views, got {}",
                self.views.len(),
                datasets.len()
            )));
        }
        check_aligned(datasets)?;
        let n = datasets[0].n_samples();
        let full = ObservedMask::all_observed(n, datasets.len());
        let mask = mask.unwrap_or(&full);
        if mask.n_samples() != n || mask.n_views() != datasets.len() {
            return Err(Error::Schema("mask shape does not match the datasets".into()));
        }
        let centered = datasets
            .iter()
            .zip(&self.views)
            .map(|(ds, v)| v.centered(ds))
            .collect::<Result<Vec<_>>>()?;
        let tau: Vec<Array1<f64>> = (0..self.views.len()).map(|i| self.noise_precision(i)).collect();
        posterior_factor_means(
            &centered,
            mask,
            &self.loadings,
            &tau,
            &self.view_precisions,
            datasets[0].sample_ids(),
        )
        .map(|(mu, _)| mu)
    }

    /// Per-component, per-view R² on the training datasets' observed rows.
    pub fn variance_explained(&self, datasets: &[ModalityDataset], mask: Option<&ObservedMask>) -> Result<Array2<f64>> {
        let centered = datasets
            .iter()
            .zip(&self.views)
            .map(|(ds, v)| v.centered(ds))
            .collect::<Result<Vec<_>>>()?;
        variance_explained_table(self.factors.view(), &self.loadings, &centered, mask)
    }
}

/// Posterior mean of the latent factors for new samples, each observing a
/// subset of the training views (`mask`).
pub fn gfa_impute_latent(
    model: &GfaModel,
    datasets: &[ModalityDataset],
    mask: &ObservedMask,
) -> Result<Array2<f64>> {
    model.project(datasets, Some(mask))
}

/// Factor posterior means (N × K) and the per-pattern covariances.
fn posterior_factor_means(
    centered: &[Array2<f64>],
    mask: &ObservedMask,
    loadings: &[Array2<f64>],
    tau: &[Array1<f64>],
    view_precisions: &[Array2<f64>],
    ids: &[String],
) -> Result<(Array2<f64>, Patterns)> {
    let n = mask.n_samples();
    let k = loadings.first().map_or(0, |w| w.ncols());
    let patterns = Patterns::new(mask, ids)?;
    let covs = patterns
        .keys
        .iter()
        .map(|key| {
            let mut prec = Array2::eye(k);
            for (i, &obs) in key.iter().enumerate() {
                if obs {
                    prec += &view_precisions[i];
                }
            }
            let (cov, logdet_prec) = linalg::spd_inverse(prec.view())?;
            Ok((cov, -logdet_prec))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rhs = Array2::zeros((n, k));
    for (i, y) in centered.iter().enumerate() {
        let weighted = loadings[i].clone() * &tau[i].view().insert_axis(Axis(1));
        let contrib = y.dot(&weighted);
        for r in 0..n {
            if mask.is_observed(r, i) {
                let mut row = rhs.row_mut(r);
                row += &contrib.row(r);
            }
        }
    }
    let mut mu = Array2::zeros((n, k));
    for r in 0..n {
        let cov = &covs[patterns.index[r]].0;
        mu.row_mut(r).assign(&cov.dot(&rhs.row(r)));
    }
    let patterns = Patterns {
        covariances: covs,
        ..patterns
    };
    Ok((mu, patterns))
}

/// Distinct observation patterns with their factor posterior covariances.
struct Patterns {
    keys: Vec<Vec<bool>>,
    index: Vec<usize>,
    /// (covariance, log-determinant of covariance) per pattern.
    covariances: Vec<(Array2<f64>, f64)>,
}

impl Patterns {
    fn new(mask: &ObservedMask, ids: &[String]) -> Result<Self> {
        let mut lookup: HashMap<Vec<bool>, usize> = HashMap::new();
        let mut keys = Vec::new();
        let mut index = Vec::with_capacity(mask.n_samples());
        for r in 0..mask.n_samples() {
            let key = mask.pattern(r);
            if !key.iter().any(|&b| b) {
                let id = ids.get(r).cloned().unwrap_or_else(|| format!("#{r}"));
                return Err(Error::MissingAllViews(id));
            }
            let next = keys.len();
            let idx = *lookup.entry(key.clone()).or_insert_with(|| {
                keys.push(key);
                next
            });
            index.push(idx);
        }
        Ok(Self {
            keys,
            index,
            covariances: Vec::new(),
        })
    }

    fn covariance(&self, sample: usize) -> &Array2<f64> {
        &self.covariances[self.index[sample]].0
    }
}

struct ViewState {
    /// Centered data; unobserved rows are ignored.
    y: Array2<f64>,
    rows: Vec<usize>,
    /// Σ over observed rows of y², per feature.
    y_sq: Array1<f64>,
    w_mean: Array2<f64>,
    /// Per feature M × M posterior covariance and its log-determinant.
    w_cov: Vec<Array2<f64>>,
    w_logdet: Vec<f64>,
    alpha_shape: f64,
    alpha_rate: Array1<f64>,
    tau_shape: f64,
    tau_rate: Array1<f64>,
}

impl ViewState {
    fn alpha_mean(&self) -> Array1<f64> {
        self.alpha_rate.mapv(|b| self.alpha_shape / b)
    }

    fn tau_mean(&self) -> Array1<f64> {
        self.tau_rate.mapv(|b| self.tau_shape / b)
    }

    fn w_second_moment(&self, d: usize) -> Array2<f64> {
        let m = self.w_mean.row(d);
        let outer = m.to_owned().insert_axis(Axis(1)).dot(&m.insert_axis(Axis(0)));
        outer + &self.w_cov[d]
    }

    /// `Σ_d E[τ_d] E[w_d w_dᵀ]`.
    fn precision_contribution(&self) -> Array2<f64> {
        let k = self.w_mean.ncols();
        let tau = self.tau_mean();
        let mut t = Array2::zeros((k, k));
        for d in 0..self.w_mean.nrows() {
            t.scaled_add(tau[d], &self.w_second_moment(d));
        }
        t
    }
}

struct Fit {
    views: Vec<ViewState>,
    mu: Array2<f64>,
    patterns: Patterns,
    mask: ObservedMask,
    ids: Vec<String>,
}

impl Fit {
    fn k(&self) -> usize {
        self.mu.ncols()
    }

    fn update_z(&mut self) -> Result<()> {
        let centered: Vec<Array2<f64>> = self.views.iter().map(|v| v.y.clone()).collect();
        let loadings: Vec<Array2<f64>> = self.views.iter().map(|v| v.w_mean.clone()).collect();
        let tau: Vec<Array1<f64>> = self.views.iter().map(ViewState::tau_mean).collect();
        let precisions: Vec<Array2<f64>> = self.views.iter().map(ViewState::precision_contribution).collect();
        let (mu, patterns) = posterior_factor_means(&centered, &self.mask, &loadings, &tau, &precisions, &self.ids)?;
        self.mu = mu;
        self.patterns = patterns;
        Ok(())
    }

    /// `Σ_{n ∈ rows} E[z_n z_nᵀ]`.
    fn z_second_moment(&self, rows: &[usize]) -> Array2<f64> {
        let k = self.k();
        let mut c = Array2::zeros((k, k));
        for &r in rows {
            let m = self.mu.row(r);
            c += &m.to_owned().insert_axis(Axis(1)).dot(&m.insert_axis(Axis(0)));
            c += self.patterns.covariance(r);
        }
        c
    }

    fn z_cross(&self, view: usize) -> Array2<f64> {
        let v = &self.views[view];
        let mu = self.mu.select(Axis(0), &v.rows);
        let y = v.y.select(Axis(0), &v.rows);
        mu.t().dot(&y)
    }

    fn update_w(&mut self) -> Result<()> {
        for i in 0..self.views.len() {
            let c = self.z_second_moment(&self.views[i].rows);
            let cross = self.z_cross(i);
            let v = &mut self.views[i];
            let alpha = v.alpha_mean();
            let tau = v.tau_mean();
            for d in 0..v.w_mean.nrows() {
                let mut prec = Array2::from_diag(&alpha);
                prec.scaled_add(tau[d], &c);
                let (cov, logdet_prec) = linalg::spd_inverse(prec.view())?;
                let mean = cov.dot(&cross.column(d)) * tau[d];
                v.w_mean.row_mut(d).assign(&mean);
                v.w_cov[d] = cov;
                v.w_logdet[d] = -logdet_prec;
            }
        }
        Ok(())
    }

    fn update_alpha(&mut self) {
        for v in &mut self.views {
            let d = v.w_mean.nrows() as f64;
            v.alpha_shape = PRIOR_SHAPE + 0.5 * d;
            for k in 0..v.w_mean.ncols() {
                let second: f64 = (0..v.w_mean.nrows())
                    .map(|r| v.w_mean[[r, k]].powi(2) + v.w_cov[r][[k, k]])
                    .sum();
                v.alpha_rate[k] = PRIOR_RATE + 0.5 * second;
            }
        }
    }

    /// Σ over observed rows of `E[(y − wᵀz)²]`, per feature.
    fn expected_squared_error(&self, view: usize) -> Array1<f64> {
        let c = self.z_second_moment(&self.views[view].rows);
        let cross = self.z_cross(view);
        let v = &self.views[view];
        Array1::from_shape_fn(v.w_mean.nrows(), |d| {
            let fitted = v.w_mean.row(d).dot(&cross.column(d));
            let quad = (&v.w_second_moment(d) * &c).sum();
            (v.y_sq[d] - 2.0 * fitted + quad).max(0.0)
        })
    }

    fn update_tau(&mut self) {
        for i in 0..self.views.len() {
            let err = self.expected_squared_error(i);
            let v = &mut self.views[i];
            v.tau_shape = PRIOR_SHAPE + 0.5 * v.rows.len() as f64;
            v.tau_rate = err.mapv(|e| PRIOR_RATE + 0.5 * e);
        }
    }

    fn elbo(&self) -> f64 {
        let ln_2pi = (2.0 * std::f64::consts::PI).ln();
        let k = self.k() as f64;
        let gamma_prior = |shape: f64, rate: f64| -> f64 {
            let e_ln = digamma(shape) - rate.ln();
            let e = shape / rate;
            PRIOR_SHAPE * PRIOR_RATE.ln() - ln_gamma(PRIOR_SHAPE) + (PRIOR_SHAPE - 1.0) * e_ln - PRIOR_RATE * e
        };
        let gamma_entropy = |shape: f64, rate: f64| -> f64 {
            shape - rate.ln() + ln_gamma(shape) + (1.0 - shape) * digamma(shape)
        };

        let mut total = 0.0;
        for (i, v) in self.views.iter().enumerate() {
            let err = self.expected_squared_error(i);
            let n_obs = v.rows.len() as f64;
            for d in 0..v.w_mean.nrows() {
                let (a, b) = (v.tau_shape, v.tau_rate[d]);
                let e_ln_tau = digamma(a) - b.ln();
                total += 0.5 * n_obs * (e_ln_tau - ln_2pi) - 0.5 * (a / b) * err[d];
                total += gamma_prior(a, b) + gamma_entropy(a, b);
                total += 0.5 * v.w_logdet[d] + 0.5 * k;
            }
            for kk in 0..v.w_mean.ncols() {
                let (a, b) = (v.alpha_shape, v.alpha_rate[kk]);
                let e_ln_alpha = digamma(a) - b.ln();
                let second: f64 = (0..v.w_mean.nrows())
                    .map(|r| v.w_mean[[r, kk]].powi(2) + v.w_cov[r][[kk, kk]])
                    .sum();
                total += 0.5 * v.w_mean.nrows() as f64 * e_ln_alpha - 0.5 * (a / b) * second;
                total += gamma_prior(a, b) + gamma_entropy(a, b);
            }
        }
        for r in 0..self.mu.nrows() {
            let (cov, logdet) = &self.patterns.covariances[self.patterns.index[r]];
            let m = self.mu.row(r);
            total += 0.5 * logdet - 0.5 * (m.dot(&m) + cov.diag().sum()) + 0.5 * k;
        }
        total
    }

    /// Keeps only the listed factor columns.
    fn restrict(&mut self, keep: &[usize]) {
        self.mu = self.mu.select(Axis(1), keep);
        for v in &mut self.views {
            v.w_mean = v.w_mean.select(Axis(1), keep);
            for cov in &mut v.w_cov {
                *cov = cov.select(Axis(0), keep).select(Axis(1), keep);
            }
            v.alpha_rate = v.alpha_rate.select(Axis(0), keep);
        }
        for (cov, logdet) in &mut self.patterns.covariances {
            *cov = cov.select(Axis(0), keep).select(Axis(1), keep);
            *logdet = f64::NAN;
        }
    }
}

/// Initial factors: leading left singular vectors of the concatenated,
/// zero-filled data scaled to unit variance, plus seeded jitter.
fn initial_factors(views: &[ViewState], n: usize, k: usize, seed: u64) -> Result<Array2<f64>> {
    let blocks: Vec<ArrayView2<f64>> = views.iter().map(|v| v.y.view()).collect();
    let concat = ndarray::concatenate(Axis(1), &blocks).map_err(|e| Error::Schema(e.to_string()))?;
    let svd = linalg::thin_svd(concat.view())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let top = svd.s.first().copied().unwrap_or(0.0);
    let scale = (n as f64).sqrt();
    let mut z = Array2::zeros((n, k));
    for c in 0..k {
        let usable = c < svd.s.len() && svd.s[c] > 1e-10 * top;
        for r in 0..n {
            let jitter: f64 = StandardNormal.sample(&mut rng);
            z[[r, c]] = if usable {
                svd.u[[r, c]] * scale + INIT_JITTER * jitter
            } else {
                jitter
            };
        }
    }
    Ok(z)
}

/// Fits the factor model. `mask` marks observed (sample, view) cells; `None`
/// means every cell is observed. Rows of unobserved cells are ignored.
pub fn gfa_fit(
    datasets: &[ModalityDataset],
    config: &IntegrationConfig,
    mask: Option<&ObservedMask>,
) -> Result<(GfaModel, MergedRepresentation)> {
    config.validate()?;
    check_aligned(datasets)?;
    let n = datasets[0].n_samples();
    let n_views = datasets.len();
    let full = ObservedMask::all_observed(n, n_views);
    let mask = mask.unwrap_or(&full).clone();
    if mask.n_samples() != n || mask.n_views() != n_views {
        return Err(Error::Schema("mask shape does not match the datasets".into()));
    }
    let ids = datasets[0].sample_ids().to_vec();
    Patterns::new(&mask, &ids)?;

    let mut schemas = Vec::with_capacity(n_views);
    let mut states = Vec::with_capacity(n_views);
    for (i, ds) in datasets.iter().enumerate() {
        let rows = mask.observed_rows(i);
        let observed = ds.values().select(Axis(0), &rows);
        let means = linalg::column_means(observed.view());
        let mut y = linalg::center_columns(ds.values(), means.view());
        for r in 0..n {
            if !mask.is_observed(r, i) {
                y.row_mut(r).fill(0.0);
            }
        }
        let y_sq = Array1::from_shape_fn(ds.n_features(), |d| rows.iter().map(|&r| y[[r, d]].powi(2)).sum());
        schemas.push(ViewSchema {
            name: ds.name.clone(),
            feature_names: ds.feature_names().to_vec(),
            means,
        });
        states.push((y, rows, y_sq));
    }

    let k = match config.selectors(n_views)? {
        Some(selectors) => {
            let observed: Vec<Array2<f64>> = states.iter().map(|(y, rows, _)| y.select(Axis(0), rows)).collect();
            let views: Vec<ArrayView2<f64>> = observed.iter().map(|y| y.view()).collect();
            resolve_ranks(&views, &selectors)?.iter().sum()
        }
        None => config.max_factors,
    };
    for (_, rows, _) in &states {
        if rows.len() < k {
            return Err(Error::InsufficientSamples {
                required: k,
                actual: rows.len(),
            });
        }
    }

    let views: Vec<ViewState> = states
        .into_iter()
        .map(|(y, rows, y_sq)| {
            let d = y.ncols();
            ViewState {
                tau_shape: PRIOR_SHAPE + 0.5 * rows.len() as f64,
                tau_rate: y_sq.mapv(|s: f64| PRIOR_RATE + 0.5 * s.max(1e-12)),
                y,
                rows,
                y_sq,
                w_mean: Array2::zeros((d, k)),
                w_cov: vec![Array2::zeros((k, k)); d],
                w_logdet: vec![0.0; d],
                alpha_shape: PRIOR_SHAPE + 0.5 * d as f64,
                alpha_rate: Array1::from_elem(k, PRIOR_SHAPE + 0.5 * d as f64),
            }
        })
        .collect();

    let mu = initial_factors(&views, n, k, config.seed)?;
    let patterns = Patterns::new(&mask, &ids)?;
    let mut fit = Fit {
        views,
        mu,
        patterns: Patterns {
            covariances: vec![(Array2::zeros((k, k)), 0.0); 0],
            ..patterns
        },
        mask,
        ids,
    };
    fit.patterns.covariances = vec![(Array2::zeros((k, k)), 0.0); fit.patterns.keys.len()];

    // Loadings and noise from the initial factors, before the first sweep.
    fit.update_w()?;
    fit.update_alpha();
    fit.update_tau();

    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.gfa_max_iter {
        iterations += 1;
        fit.update_z()?;
        fit.update_w()?;
        fit.update_alpha();
        fit.update_tau();
        let bound = fit.elbo();
        if let Some(&prev) = trace.last() {
            let prev: f64 = prev;
            if ((bound - prev) / prev.abs().max(f64::MIN_POSITIVE)).abs() < config.gfa_tolerance {
                trace.push(bound);
                converged = true;
                break;
            }
        }
        trace.push(bound);
    }

    // Prune weak factors once, then refit loadings/noise and the factors.
    let r2 = factor_r2(&fit)?;
    let keep: Vec<usize> = (0..k)
        .filter(|&c| r2.row(c).iter().any(|&v| v >= config.prune_fraction))
        .collect();
    if keep.is_empty() {
        return Err(Error::Rank(format!(
            "no factor explains at least {} of any view's variance",
            config.prune_fraction
        )));
    }
    let active: Vec<bool> = (0..k).map(|c| keep.contains(&c)).collect();
    fit.restrict(&keep);
    fit.update_w()?;
    fit.update_alpha();
    fit.update_tau();
    fit.update_z()?;

    // Order by variance explained and orient by loadings.
    let r2 = factor_r2(&fit)?;
    let order = order_by_variance(r2.view());
    let ordered_w: Vec<Array2<f64>> = fit.views.iter().map(|v| v.w_mean.select(Axis(1), &order)).collect();
    let signs = sign_by_weights(&ordered_w.iter().collect::<Vec<_>>(), keep.len());
    let flip = |m: &Array2<f64>| super::permute_columns(m, &order, &signs);
    let factors = flip(&fit.mu);
    let loadings: Vec<Array2<f64>> = fit.views.iter().map(|v| flip(&v.w_mean)).collect();
    let view_precisions: Vec<Array2<f64>> = fit
        .views
        .iter()
        .map(|v| {
            let t = v.precision_contribution();
            let p = flip(&t);
            flip(&p.t().to_owned()).t().to_owned()
        })
        .collect();
    let factor_precisions = Array2::from_shape_fn((n_views, keep.len()), |(i, c)| {
        fit.views[i].alpha_mean()[order[c]]
    });
    let noise_variances: Vec<Array1<f64>> = fit.views.iter().map(|v| v.tau_mean().mapv(|t| 1.0 / t)).collect();

    let centered: Vec<Array2<f64>> = fit.views.iter().map(|v| v.y.clone()).collect();
    let variance_explained = variance_explained_table(factors.view(), &loadings, &centered, Some(&fit.mask))?;
    let weight_tables = datasets
        .iter()
        .zip(&loadings)
        .map(|(ds, w)| WeightTable {
            view: ds.name.clone(),
            feature_names: ds.feature_names().to_vec(),
            weights: w.clone(),
        })
        .collect();
    let rep = MergedRepresentation {
        sample_ids: fit.ids.clone(),
        scores: factors.clone(),
        component_labels: (0..keep.len()).map(ComponentLabel::Factor).collect(),
        view_names: datasets.iter().map(|d| d.name.clone()).collect(),
        weight_tables,
        variance_explained,
    };
    let model = GfaModel {
        views: schemas,
        sample_ids: fit.ids,
        factors,
        loadings,
        noise_variances,
        factor_precisions,
        view_precisions,
        elbo_trace: trace,
        active_factors: active,
        converged,
        iterations,
    };
    Ok((model, rep))
}

fn factor_r2(fit: &Fit) -> Result<Array2<f64>> {
    let centered: Vec<Array2<f64>> = fit.views.iter().map(|v| v.y.clone()).collect();
    let loadings: Vec<Array2<f64>> = fit.views.iter().map(|v| v.w_mean.clone()).collect();
    variance_explained_table(fit.mu.view(), &loadings, &centered, Some(&fit.mask))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integration::Method;

    fn rank_one(n: usize, d: usize) -> (Array1<f64>, Array1<f64>, Array2<f64>) {
        let z = Array1::from_shape_fn(n, |i| ((i * 37 + 11) % 23) as f64 / 23.0 - 0.5);
        let w = Array1::from_shape_fn(d, |j| 1.0 + 0.5 * j as f64 * if j % 2 == 0 { 1.0 } else { -1.0 });
        let y = Array2::from_shape_fn((n, d), |(i, j)| z[i] * w[j]);
        (z, w, y)
    }

    fn dataset(name: &str, y: Array2<f64>) -> ModalityDataset {
        let ids = (0..y.nrows()).map(|i| format!("s{i:04}")).collect();
        let feats = (0..y.ncols()).map(|j| format!("{name}_{j}")).collect();
        ModalityDataset::new(name, ids, feats, y).unwrap()
    }

    #[test]
    fn rank_one_single_view_keeps_one_factor() {
        let (_, _, y) = rank_one(120, 6);
        let ds = dataset("v", y.clone());
        let mut cfg = IntegrationConfig::new(Method::Gfa);
        cfg.max_factors = 3;
        let (model, rep) = gfa_fit(&[ds], &cfg, None).unwrap();
        assert_eq!(rep.n_components(), 1, "active: {:?}", model.active_factors);
        let yc = linalg::center_columns(y.view(), linalg::column_means(y.view()).view());
        let recon = model.factors.dot(&model.loadings[0].t());
        let err = linalg::frobenius_sq((&yc - &recon).view()).sqrt() / linalg::frobenius_sq(yc.view()).sqrt();
        assert!(err < 1e-3, "relative error {err}");
    }

    #[test]
    fn elbo_is_monotone() {
        let (_, _, y) = rank_one(80, 5);
        let noise = Array2::from_shape_fn(y.dim(), |(i, j)| (((i * 13 + j * 7) % 17) as f64 / 17.0 - 0.5) * 0.2);
        let ds = dataset("v", y + noise);
        let mut cfg = IntegrationConfig::new(Method::Gfa);
        cfg.max_factors = 3;
        let (model, _) = gfa_fit(&[ds], &cfg, None).unwrap();
        for w in model.elbo_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-6, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn sample_without_views_is_rejected() {
        let (_, _, y) = rank_one(20, 3);
        let ds = dataset("v", y);
        let mut rows = vec![vec![true]; 20];
        rows[4] = vec![false];
        let mask = ObservedMask::from_rows(&rows).unwrap();
        let mut cfg = IntegrationConfig::new(Method::Gfa);
        cfg.max_factors = 2;
        assert!(matches!(gfa_fit(&[ds], &cfg, Some(&mask)), Err(Error::MissingAllViews(id)) if id == "s0004"));
    }

    #[test]
    fn pruning_every_factor_is_a_rank_error() {
        let y = Array2::from_shape_fn((50, 4), |(i, j)| (((i * 7 + j * 13) % 11) as f64 - 5.0) / 5.0);
        let mut cfg = IntegrationConfig::new(Method::Gfa);
        cfg.max_factors = 3;
        cfg.prune_fraction = 0.95;
        assert!(matches!(gfa_fit(&[dataset("v", y)], &cfg, None), Err(Error::Rank(_))));
    }
}
