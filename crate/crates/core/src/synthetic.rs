//! Seeded synthetic fixtures: views with planted joint and individual
//! structure, and a matching cohort with a coded event registry.

use chrono::{Days, NaiveDate};
use ndarray::{s, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cohort::{CodeSystem, EventRecord, DAYS_PER_YEAR};
use crate::data::ModalityDataset;
use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedConfig {
    pub n_samples: usize,
    pub view_dims: Vec<usize>,
    pub joint_rank: usize,
    pub individual_ranks: Vec<usize>,
    /// Singular-value scale per unit-variance score, relative to noise 1.
    pub joint_scale: f64,
    pub individual_scale: f64,
    pub noise_sd: f64,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        Self {
            n_samples: 500,
            view_dims: vec![20, 30, 40],
            joint_rank: 1,
            individual_ranks: vec![1, 1, 1],
            joint_scale: 1.0,
            individual_scale: 0.8,
            noise_sd: 0.01,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlantedData {
    pub datasets: Vec<ModalityDataset>,
    /// N × r, centered, orthogonal columns with unit variance.
    pub joint_scores: Array2<f64>,
    pub individual_scores: Vec<Array2<f64>>,
    /// D_i × r orthonormal loadings.
    pub joint_loadings: Vec<Array2<f64>>,
    pub individual_loadings: Vec<Array2<f64>>,
}

pub fn sample_ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("S{:05}", i + 1)).collect()
}

pub(crate) fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(rng))
}

/// Views `Y_i = a·S Uᵢᵀ + b·Sᵢ Vᵢᵀ + E` with all score columns mutually
/// orthogonal and centered, and each view's loadings orthonormal.
pub fn planted_views(cfg: &PlantedConfig) -> Result<PlantedData> {
    let n_views = cfg.view_dims.len();
    if n_views == 0 || cfg.individual_ranks.len() != n_views {
        return Err(Error::Config("one individual rank per view is required".into()));
    }
    let total: usize = cfg.joint_rank + cfg.individual_ranks.iter().sum::<usize>();
    if total + 1 > cfg.n_samples {
        return Err(Error::Config("too many planted components for the sample count".into()));
    }
    for (d, r) in cfg.view_dims.iter().zip(&cfg.individual_ranks) {
        if cfg.joint_rank + r > *d {
            return Err(Error::Config("planted rank exceeds a view's feature count".into()));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.n_samples;
    let raw = gaussian(n, total, &mut rng);
    let centered = linalg::center_columns(raw.view(), linalg::column_means(raw.view()).view());
    let scores = linalg::orthonormal_columns(centered.view()) * (n as f64).sqrt();
    let joint_scores = scores.slice(s![.., ..cfg.joint_rank]).to_owned();
    let mut offset = cfg.joint_rank;
    let ids = sample_ids(n);
    let noise = Normal::new(0.0, cfg.noise_sd).map_err(|e| Error::Config(e.to_string()))?;

    let mut datasets = Vec::with_capacity(n_views);
    let mut individual_scores = Vec::with_capacity(n_views);
    let mut joint_loadings = Vec::with_capacity(n_views);
    let mut individual_loadings = Vec::with_capacity(n_views);
    for (v, (&d, &r)) in cfg.view_dims.iter().zip(&cfg.individual_ranks).enumerate() {
        let ind = scores.slice(s![.., offset..offset + r]).to_owned();
        offset += r;
        let loadings = linalg::orthonormal_columns(gaussian(d, cfg.joint_rank + r, &mut rng).view());
        let u = loadings.slice(s![.., ..cfg.joint_rank]).to_owned();
        let w = loadings.slice(s![.., cfg.joint_rank..]).to_owned();
        let mut y = joint_scores.dot(&u.t()) * cfg.joint_scale + ind.dot(&w.t()) * cfg.individual_scale;
        y.mapv_inplace(|x| x + noise.sample(&mut rng));
        let name = format!("view{}", v + 1);
        let features = (0..d).map(|j| format!("{name}_f{:02}", j + 1)).collect();
        datasets.push(ModalityDataset::new(name, ids.clone(), features, y)?);
        individual_scores.push(ind);
        joint_loadings.push(u);
        individual_loadings.push(w);
    }
    Ok(PlantedData {
        datasets,
        joint_scores,
        individual_scores,
        joint_loadings,
        individual_loadings,
    })
}

/// Unit-variance factors with distinct scales shared by every view through
/// orthonormal loadings; useful for factor-model checks.
pub fn factor_views(
    n_samples: usize,
    view_dims: &[usize],
    factor_scales: &[f64],
    noise_sd: f64,
    seed: u64,
) -> Result<(Vec<ModalityDataset>, Array2<f64>)> {
    let k = factor_scales.len();
    if k == 0 || k >= n_samples || view_dims.iter().any(|&d| d < k) {
        return Err(Error::Config("factor count must be below every view's feature count".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw = gaussian(n_samples, k, &mut rng);
    let centered = linalg::center_columns(raw.view(), linalg::column_means(raw.view()).view());
    let z = linalg::orthonormal_columns(centered.view()) * (n_samples as f64).sqrt();
    let noise = Normal::new(0.0, noise_sd).map_err(|e| Error::Config(e.to_string()))?;
    let ids = sample_ids(n_samples);
    let mut out = Vec::new();
    for (v, &d) in view_dims.iter().enumerate() {
        let w = linalg::orthonormal_columns(gaussian(d, k, &mut rng).view());
        let mut scaled = w.clone();
        for (mut col, &s) in scaled.axis_iter_mut(Axis(1)).zip(factor_scales) {
            col *= s;
        }
        let mut y = z.dot(&scaled.t());
        y.mapv_inplace(|x| x + noise.sample(&mut rng));
        let name = format!("view{}", v + 1);
        let features = (0..d).map(|j| format!("{name}_f{:02}", j + 1)).collect();
        out.push(ModalityDataset::new(name, ids.clone(), features, y)?);
    }
    Ok((out, z))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistryConfig {
    pub first_baseline: NaiveDate,
    /// Baselines are spread uniformly over this many days.
    pub baseline_span_days: u64,
    pub end_study: NaiveDate,
    /// Yearly hazard at a zero linear predictor.
    pub base_hazard: f64,
    /// Share of subjects lost to follow-up before the study end.
    pub loss_fraction: f64,
    /// Share of subjects with the endpoint already recorded before baseline.
    pub prevalent_fraction: f64,
    pub endpoint_codes: Vec<String>,
    pub unrelated_codes: Vec<String>,
    pub seed: u64,
}

impl Default for RegistryConfig {
    fn default() -> Self {
        Self {
            first_baseline: NaiveDate::from_ymd_opt(2006, 1, 1).expect("valid date"),
            baseline_span_days: 4 * 365,
            end_study: NaiveDate::from_ymd_opt(2020, 1, 1).expect("valid date"),
            base_hazard: 0.04,
            loss_fraction: 0.15,
            prevalent_fraction: 0.03,
            endpoint_codes: vec!["I48".into(), "I48.0".into(), "I48.1".into()],
            unrelated_codes: vec!["E11".into(), "J45".into(), "K40.1".into()],
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistrySubject {
    pub subject_id: String,
    pub baseline_date: NaiveDate,
    pub censor_date: Option<NaiveDate>,
    pub age: f64,
    pub sex: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticRegistry {
    pub subjects: Vec<RegistrySubject>,
    pub events: Vec<EventRecord>,
}

/// Event times are exponential with rate `base_hazard·exp(lp)` years⁻¹.
pub fn synthetic_registry(ids: &[String], linear_predictor: &[f64], cfg: &RegistryConfig) -> Result<SyntheticRegistry> {
    if ids.len() != linear_predictor.len() {
        return Err(Error::Schema("one linear predictor per subject is required".into()));
    }
    if !(cfg.base_hazard > 0.0) || cfg.endpoint_codes.is_empty() {
        return Err(Error::Config("registry needs a positive hazard and endpoint codes".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let add = |d: NaiveDate, days: u64| d.checked_add_days(Days::new(days)).expect("date in range");
    let sub = |d: NaiveDate, days: u64| d.checked_sub_days(Days::new(days)).expect("date in range");
    let mut subjects = Vec::with_capacity(ids.len());
    let mut events = Vec::new();
    for (id, &lp) in ids.iter().zip(linear_predictor) {
        let baseline = add(cfg.first_baseline, rng.random_range(0..=cfg.baseline_span_days));
        let censor = (rng.random::<f64>() < cfg.loss_fraction).then(|| {
            let years = rng.random_range(1.0..10.0);
            add(baseline, (years * DAYS_PER_YEAR) as u64)
        });
        let rate = cfg.base_hazard * lp.exp();
        let t: f64 = Exp::new(rate).map_err(|e| Error::Config(e.to_string()))?.sample(&mut rng);
        let days = (t * DAYS_PER_YEAR).round().max(1.0);
        if days < 40_000.0 {
            let date = add(baseline, days as u64);
            let code = &cfg.endpoint_codes[rng.random_range(0..cfg.endpoint_codes.len())];
            events.push(EventRecord {
                subject_id: id.clone(),
                code_system: CodeSystem::Icd10,
                code: code.clone(),
                date,
            });
        }
        if rng.random::<f64>() < cfg.prevalent_fraction {
            events.push(EventRecord {
                subject_id: id.clone(),
                code_system: CodeSystem::Icd10,
                code: cfg.endpoint_codes[0].clone(),
                date: sub(baseline, rng.random_range(1..2000)),
            });
        }
        if !cfg.unrelated_codes.is_empty() && rng.random::<f64>() < 0.5 {
            let code = &cfg.unrelated_codes[rng.random_range(0..cfg.unrelated_codes.len())];
            let system = if code.starts_with('K') {
                CodeSystem::Opcs4
            } else {
                CodeSystem::Icd10
            };
            events.push(EventRecord {
                subject_id: id.clone(),
                code_system: system,
                code: code.clone(),
                date: add(sub(baseline, 1000), rng.random_range(0..6000)),
            });
        }
        subjects.push(RegistrySubject {
            subject_id: id.clone(),
            baseline_date: baseline,
            censor_date: censor,
            age: (rng.random_range(40.0..70.0f64) * 10.0).round() / 10.0,
            sex: f64::from(rng.random::<bool>() as u8),
        });
    }
    events.sort_by(|a, b| (&a.subject_id, a.date).cmp(&(&b.subject_id, b.date)));
    Ok(SyntheticRegistry { subjects, events })
}
