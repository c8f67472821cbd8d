use ndarray::{concatenate, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::{check_aligned, variance_explained_table, ComponentLabel, IntegrationConfig, Method, MergedRepresentation, ViewSchema, WeightTable};
use crate::data::ModalityDataset;
use crate::error::{Error, Result};
use crate::linalg;
use crate::pca::{self, PcaModel};

/// Concatenation of (optionally PCA-reduced) views.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EarlyFusionModel {
    views: Vec<ViewSchema>,
    pca: Option<Vec<PcaModel>>,
}

impl EarlyFusionModel {
    pub fn pca_models(&self) -> Option<&[PcaModel]> {
        self.pca.as_deref()
    }

    pub fn project(&self, datasets: &[ModalityDataset]) -> Result<Array2<f64>> {
        if datasets.len() != self.views.len() {
            return Err(Error::Schema(format!(
                "expected {} views, got {}",
                self.views.len(),
                datasets.len()
            )));
        }
        check_aligned(datasets)?;
        let blocks = datasets
            .iter()
            .enumerate()
            .map(|(i, ds)| {
                self.views[i].check(ds)?;
                match &self.pca {
                    Some(models) => models[i].transform(ds.values()),
                    None => Ok(ds.values().to_owned()),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        concat_columns(&blocks, datasets[0].n_samples())
    }
}

fn concat_columns(blocks: &[Array2<f64>], n: usize) -> Result<Array2<f64>> {
    if blocks.is_empty() {
        return Ok(Array2::zeros((n, 0)));
    }
    let views: Vec<ArrayView2<f64>> = blocks.iter().map(|b| b.view()).collect();
    concatenate(Axis(1), &views).map_err(|e| Error::Schema(e.to_string()))
}

/// Concatenates the views column-wise in input order, after a per-view PCA
/// when the method is `EarlyPca`.
pub fn early_fusion(
    datasets: &[ModalityDataset],
    config: &IntegrationConfig,
) -> Result<(EarlyFusionModel, MergedRepresentation)> {
    config.validate()?;
    check_aligned(datasets)?;
    let n = datasets[0].n_samples();
    let schemas: Vec<ViewSchema> = datasets
        .iter()
        .map(|ds| ViewSchema {
            name: ds.name.clone(),
            feature_names: ds.feature_names().to_vec(),
            means: linalg::column_means(ds.values()),
        })
        .collect();

    let use_pca = config.method == Method::EarlyPca;
    let mut blocks = Vec::with_capacity(datasets.len());
    let mut block_weights = Vec::with_capacity(datasets.len());
    let mut pca_models = Vec::new();
    if use_pca {
        let selectors = config
            .selectors(datasets.len())?
            .ok_or_else(|| Error::Config("early_pca needs per-view ranks or a variance fraction".into()))?;
        for (ds, sel) in datasets.iter().zip(selectors) {
            let (model, scores) = pca::pca(ds, sel)?;
            block_weights.push(model.components.clone());
            blocks.push(scores);
            pca_models.push(model);
        }
    } else {
        for ds in datasets {
            blocks.push(ds.values().to_owned());
            block_weights.push(Array2::eye(ds.n_features()));
        }
    }
    let scores = concat_columns(&blocks, n)?;
    let k = scores.ncols();

    let mut labels = Vec::with_capacity(k);
    let mut weights = Vec::with_capacity(datasets.len());
    let mut offset = 0;
    for (ds, w) in datasets.iter().zip(&block_weights) {
        let width = w.ncols();
        let mut full = Array2::zeros((ds.n_features(), k));
        full.slice_mut(ndarray::s![.., offset..offset + width]).assign(w);
        weights.push(full);
        labels.extend((0..width).map(|index| ComponentLabel::Individual {
            view: ds.name.clone(),
            index,
        }));
        offset += width;
    }

    let centered: Vec<Array2<f64>> = datasets
        .iter()
        .zip(&schemas)
        .map(|(ds, s)| linalg::center_columns(ds.values(), s.means.view()))
        .collect();
    let score_means = linalg::column_means(scores.view());
    let centered_scores = linalg::center_columns(scores.view(), score_means.view());
    let variance_explained = variance_explained_table(centered_scores.view(), &weights, &centered, None)?;

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
    let model = EarlyFusionModel {
        views: schemas,
        pca: use_pca.then_some(pca_models),
    };
    Ok((model, rep))
}
