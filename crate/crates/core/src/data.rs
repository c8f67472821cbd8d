//! Modality-specific tabular datasets: loading, sample alignment,
//! standardization and collinearity screening.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// One modality: a samples × features matrix with ids and feature names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalityDataset {
    pub name: String,
    sample_ids: Vec<String>,
    feature_names: Vec<String>,
    values: Array2<f64>,
}

impl ModalityDataset {
    pub fn new(
        name: impl Into<String>,
        sample_ids: Vec<String>,
        feature_names: Vec<String>,
        values: Array2<f64>,
    ) -> Result<Self> {
        let name = name.into();
        if values.nrows() != sample_ids.len() || values.ncols() != feature_names.len() {
            return Err(Error::Schema(format!(
                "{name}: matrix is {}x{} but there are {} ids and {} feature names",
                values.nrows(),
                values.ncols(),
                sample_ids.len(),
                feature_names.len()
            )));
        }
        let mut seen = HashSet::with_capacity(sample_ids.len());
        for id in &sample_ids {
            if id.is_empty() || !seen.insert(id.as_str()) {
                return Err(Error::DuplicateId {
                    id: id.clone(),
                    source_name: name,
                });
            }
        }
        let mut seen = HashSet::with_capacity(feature_names.len());
        for f in &feature_names {
            if !seen.insert(f.as_str()) {
                return Err(Error::Schema(format!("{name}: duplicate feature `{f}`")));
            }
        }
        if let Some(((r, c), v)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::DataFormat {
                source_name: name,
                row: r + 1,
                column: feature_names[c].clone(),
                value: v.to_string(),
            });
        }
        Ok(Self {
            name,
            sample_ids,
            feature_names,
            values,
        })
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn n_samples(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// Same dataset with the matrix replaced (shape must match).
    pub fn with_values(&self, values: Array2<f64>) -> Result<Self> {
        Self::new(
            self.name.clone(),
            self.sample_ids.clone(),
            self.feature_names.clone(),
            values,
        )
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            name: self.name.clone(),
            sample_ids: rows.iter().map(|&r| self.sample_ids[r].clone()).collect(),
            feature_names: self.feature_names.clone(),
            values: self.values.select(Axis(0), rows),
        }
    }

    /// Rows for the given ids, in the given order.
    pub fn select_ids(&self, ids: &[String]) -> Result<Self> {
        let index = self.id_index();
        let rows = ids
            .iter()
            .map(|id| {
                index.get(id.as_str()).copied().ok_or_else(|| {
                    Error::Schema(format!("{}: unknown sample id `{id}`", self.name))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.select_rows(&rows))
    }

    /// Keeps only the named features, in the order given.
    pub fn select_features(&self, names: &[String]) -> Result<Self> {
        let cols = names
            .iter()
            .map(|f| {
                self.feature_names
                    .iter()
                    .position(|g| g == f)
                    .ok_or_else(|| Error::Schema(format!("{}: unknown feature `{f}`", self.name)))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(
            self.name.clone(),
            self.sample_ids.clone(),
            names.to_vec(),
            self.values.select(Axis(1), &cols),
        )
    }

    pub fn id_index(&self) -> HashMap<&str, usize> {
        self.sample_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect()
    }
}

/// Reads a modality from a headed CSV with one id column; all other columns
/// must be finite reals. The dataset is named after the file stem.
pub fn load_modality_csv(path: &Path, id_column: &str) -> Result<ModalityDataset> {
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "modality".to_string());
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(csv_err)?;
    let headers = reader.headers().map_err(csv_err)?.clone();
    let id_idx = headers
        .iter()
        .position(|h| h.trim() == id_column)
        .ok_or_else(|| Error::Schema(format!("{}: no id column `{id_column}`", path.display())))?;
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != id_idx)
        .map(|(_, h)| h.trim().to_string())
        .collect();

    let mut ids = Vec::new();
    let mut flat = Vec::new();
    let mut seen = HashSet::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(row + 2);
        let id = record.get(id_idx).unwrap_or("").trim().to_string();
        if id.is_empty() || !seen.insert(id.clone()) {
            return Err(Error::DuplicateId {
                id,
                source_name: path.display().to_string(),
            });
        }
        for (i, cell) in record.iter().enumerate() {
            if i == id_idx {
                continue;
            }
            let value = cell
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::DataFormat {
                    source_name: path.display().to_string(),
                    row: line,
                    column: headers.get(i).unwrap_or("?").to_string(),
                    value: cell.to_string(),
                })?;
            flat.push(value);
        }
        ids.push(id);
    }
    let values = Array2::from_shape_vec((ids.len(), feature_names.len()), flat)
        .map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
    ModalityDataset::new(name, ids, feature_names, values)
}

/// Restricts every dataset to the ids present in all of them, sorted
/// lexicographically.
pub fn align_samples(datasets: &[ModalityDataset]) -> Result<Vec<ModalityDataset>> {
    let first = datasets
        .first()
        .ok_or_else(|| Error::Config("align_samples needs at least one dataset".into()))?;
    let mut common: BTreeSet<&str> = first.sample_ids.iter().map(String::as_str).collect();
    for ds in &datasets[1..] {
        let ids: HashSet<&str> = ds.sample_ids.iter().map(String::as_str).collect();
        common.retain(|id| ids.contains(id));
    }
    if common.is_empty() {
        let names: Vec<&str> = datasets.iter().map(|d| d.name.as_str()).collect();
        return Err(Error::EmptyCohort(names.join(", ")));
    }
    let ids: Vec<String> = common.into_iter().map(str::to_string).collect();
    datasets.iter().map(|ds| ds.select_ids(&ids)).collect()
}

/// Per-feature location/scale learned on a training dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub feature_names: Vec<String>,
    pub means: Array1<f64>,
    pub stds: Array1<f64>,
}

/// Columns whose training std falls below this are mapped to zero.
pub const MIN_STD: f64 = 1e-12;

impl Standardizer {
    /// Population (1/N) statistics.
    pub fn fit(train: &ModalityDataset) -> Result<Self> {
        if train.n_samples() == 0 {
            return Err(Error::EmptyInput);
        }
        let means = linalg::column_means(train.values());
        let stds = train.values.std_axis(Axis(0), 0.0);
        Ok(Self {
            feature_names: train.feature_names.clone(),
            means,
            stds,
        })
    }

    pub fn transform(&self, ds: &ModalityDataset) -> Result<ModalityDataset> {
        if ds.feature_names != self.feature_names {
            return Err(Error::Schema(format!(
                "{}: features differ from the standardization training set",
                ds.name
            )));
        }
        let mut values = ds.values.clone();
        for (j, mut col) in values.columns_mut().into_iter().enumerate() {
            let (m, s) = (self.means[j], self.stds[j]);
            if s < MIN_STD {
                col.fill(0.0);
            } else {
                col.mapv_inplace(|x| (x - m) / s);
            }
        }
        ds.with_values(values)
    }
}

/// Standardizes every dataset in `apply_to` with statistics from `train`.
pub fn standardize(
    train: &ModalityDataset,
    apply_to: &[ModalityDataset],
) -> Result<(Vec<ModalityDataset>, Array1<f64>, Array1<f64>)> {
    let st = Standardizer::fit(train)?;
    let out = apply_to
        .iter()
        .map(|ds| st.transform(ds))
        .collect::<Result<Vec<_>>>()?;
    Ok((out, st.means, st.stds))
}

const VIF_RIDGE: f64 = 1e-10;
const VIF_CAP: f64 = 1e12;
const VIF_TIE: f64 = 1e-9;

/// Variance inflation factor of every column: each column is regressed on
/// all others plus an intercept.
pub fn variance_inflation_factors(values: ArrayView2<f64>) -> Result<Vec<f64>> {
    let (n, d) = values.dim();
    if n < 3 {
        return Err(Error::InsufficientSamples {
            required: 3,
            actual: n,
        });
    }
    let means = linalg::column_means(values);
    let centered = linalg::center_columns(values, means.view());
    let gram = centered.t().dot(&centered);
    let mut vifs = Vec::with_capacity(d);
    for j in 0..d {
        let tss = gram[[j, j]];
        if tss <= f64::EPSILON * n as f64 {
            // constant column: collinear with the intercept
            vifs.push(VIF_CAP);
            continue;
        }
        if d == 1 {
            vifs.push(1.0);
            continue;
        }
        let others: Vec<usize> = (0..d).filter(|&k| k != j).collect();
        let mut g = gram.select(Axis(0), &others).select(Axis(1), &others);
        for k in 0..others.len() {
            g[[k, k]] += VIF_RIDGE;
        }
        let rhs = Array1::from_iter(others.iter().map(|&k| gram[[k, j]]));
        let beta = linalg::solve_spd(g.view(), rhs.view())?;
        let fitted = centered.select(Axis(1), &others).dot(&beta);
        let rss: f64 = centered
            .column(j)
            .iter()
            .zip(fitted.iter())
            .map(|(y, f)| (y - f).powi(2))
            .sum();
        let one_minus_r2 = rss / tss;
        let vif = if one_minus_r2 <= 1.0 / VIF_CAP {
            VIF_CAP
        } else {
            (1.0 / one_minus_r2).min(VIF_CAP)
        };
        vifs.push(vif);
    }
    Ok(vifs)
}

/// Iteratively drops the feature with the largest VIF above `threshold`
/// (ties go to the later column) until none exceeds it. Returns the
/// filtered dataset and the removed feature names in removal order.
pub fn vif_filter(dataset: &ModalityDataset, threshold: f64) -> Result<(ModalityDataset, Vec<String>)> {
    if !(threshold > 1.0) {
        return Err(Error::Config(format!("VIF threshold must exceed 1, got {threshold}")));
    }
    if dataset.n_samples() < 3 {
        return Err(Error::InsufficientSamples {
            required: 3,
            actual: dataset.n_samples(),
        });
    }
    let mut current = dataset.clone();
    let mut removed = Vec::new();
    loop {
        let vifs = variance_inflation_factors(current.values())?;
        let max = vifs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(max > threshold) {
            break;
        }
        let drop = (0..vifs.len())
            .rev()
            .find(|&j| vifs[j] > threshold && (max - vifs[j]).abs() <= VIF_TIE)
            .expect("max attained");
        removed.push(current.feature_names[drop].clone());
        let keep: Vec<String> = current
            .feature_names
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != drop)
            .map(|(_, f)| f.clone())
            .collect();
        current = current.select_features(&keep)?;
    }
    Ok((current, removed))
}
