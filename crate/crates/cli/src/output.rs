//! Result files of a run. Every writer is deterministic for identical
//! inputs, so two runs with the same seed produce identical bytes.

use std::fs;
use std::path::Path;

use mvfuse_core::evaluation::{Comparison, ModelEvaluation};
use mvfuse_core::MergedRepresentation;
use serde::Serialize;

use crate::error::{CliError, Result};

pub const MERGED_SCORES: &str = "merged_scores.csv";
pub const VARIANCE_EXPLAINED: &str = "variance_explained.csv";
pub const MODEL_SUMMARY: &str = "model_summary.json";
pub const CV_METRICS: &str = "cv_metrics.csv";
pub const COMPARISONS: &str = "comparisons.csv";
pub const PREDICTIONS: &str = "predictions.csv";
pub const MANIFEST: &str = "run_manifest.json";

pub fn weights_file(view: &str) -> String {
    format!("weights_{view}.csv")
}

fn is_run_file(name: &str) -> bool {
    [MERGED_SCORES, VARIANCE_EXPLAINED, MODEL_SUMMARY, CV_METRICS, COMPARISONS, PREDICTIONS, MANIFEST].contains(&name)
        || (name.starts_with("weights_") && name.ends_with(".csv"))
}

/// Creates the output directory. An existing non-empty directory is an
/// error unless `force`, in which case files from an earlier run are removed.
pub fn prepare_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        let entries: Vec<_> = fs::read_dir(dir)
            .map_err(|e| CliError::output(dir, e))?
            .collect::<std::io::Result<_>>()
            .map_err(|e| CliError::output(dir, e))?;
        if !entries.is_empty() && !force {
            return Err(CliError::Stage {
                stage: "output",
                source: mvfuse_core::Error::OutputExists(dir.to_path_buf()),
            });
        }
        for e in entries {
            let name = e.file_name().to_string_lossy().into_owned();
            if is_run_file(&name) && e.path().is_file() {
                fs::remove_file(e.path()).map_err(|err| CliError::output(e.path(), err))?;
            }
        }
    }
    fs::create_dir_all(dir).map_err(|e| CliError::output(dir, e))
}

/// Rows of predictions.csv.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub column: String,
    pub sample_ids: Vec<String>,
    pub values: Vec<String>,
}

impl Predictions {
    pub fn scores(column: &str, sample_ids: Vec<String>, values: Vec<f64>) -> Self {
        Self {
            column: column.into(),
            sample_ids,
            values: values.iter().map(ToString::to_string).collect(),
        }
    }

    pub fn clusters(sample_ids: Vec<String>, assignments: &[i64]) -> Self {
        Self {
            column: "cluster".into(),
            sample_ids,
            values: assignments.iter().map(ToString::to_string).collect(),
        }
    }
}

pub struct RunArtifacts<'a> {
    pub representation: &'a MergedRepresentation,
    pub model_summary: &'a serde_json::Value,
    pub models: &'a [ModelEvaluation],
    pub comparisons: &'a [Comparison],
    pub predictions: &'a Predictions,
    pub manifest: &'a serde_json::Value,
}

/// Names of the files a run writes, in writing order.
pub fn file_names(rep: &MergedRepresentation, with_comparisons: bool) -> Vec<String> {
    let mut out = vec![MERGED_SCORES.to_string()];
    out.extend(rep.weight_tables.iter().map(|w| weights_file(&w.view)));
    out.extend([VARIANCE_EXPLAINED, MODEL_SUMMARY, CV_METRICS].map(String::from));
    if with_comparisons {
        out.push(COMPARISONS.into());
    }
    out.extend([PREDICTIONS, MANIFEST].map(String::from));
    out
}

fn write_csv(path: &Path, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::output(path, e))?;
    w.write_record(header).map_err(|e| CliError::output(path, e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| CliError::output(path, e))?;
    }
    w.flush().map_err(|e| CliError::output(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::output(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::output(path, e))
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

pub fn write_all(dir: &Path, a: &RunArtifacts<'_>) -> Result<()> {
    let rep = a.representation;
    let names = rep.component_names();

    let mut header = vec!["sample_id".to_string()];
    header.extend(names.iter().cloned());
    write_csv(
        &dir.join(MERGED_SCORES),
        &header,
        rep.sample_ids.iter().zip(rep.scores.rows()).map(|(id, row)| {
            std::iter::once(id.clone()).chain(row.iter().map(ToString::to_string)).collect()
        }),
    )?;

    for table in &rep.weight_tables {
        let mut header = vec!["feature".to_string()];
        header.extend(names.iter().cloned());
        write_csv(
            &dir.join(weights_file(&table.view)),
            &header,
            table.feature_names.iter().zip(table.weights.rows()).map(|(f, row)| {
                std::iter::once(f.clone()).chain(row.iter().map(ToString::to_string)).collect()
            }),
        )?;
    }

    let mut rows = Vec::new();
    for (k, name) in names.iter().enumerate() {
        for (v, view) in rep.view_names.iter().enumerate() {
            rows.push(vec![name.clone(), view.clone(), rep.variance_explained[[k, v]].to_string()]);
        }
    }
    write_csv(&dir.join(VARIANCE_EXPLAINED), &strings(&["component", "view", "r2"]), rows)?;

    write_json(&dir.join(MODEL_SUMMARY), a.model_summary)?;

    let mut rows = Vec::new();
    for m in a.models {
        for (f, v) in m.fold_metrics.iter().enumerate() {
            rows.push(vec![m.model.clone(), f.to_string(), m.metric_name.clone(), v.to_string()]);
        }
    }
    write_csv(&dir.join(CV_METRICS), &strings(&["model", "fold", "metric_name", "value"]), rows)?;

    if !a.comparisons.is_empty() {
        write_csv(
            &dir.join(COMPARISONS),
            &strings(&["model_a", "model_b", "p_value", "significant"]),
            a.comparisons
                .iter()
                .map(|c| vec![c.model_a.clone(), c.model_b.clone(), c.p_value.to_string(), c.significant.to_string()]),
        )?;
    }

    let p = a.predictions;
    write_csv(
        &dir.join(PREDICTIONS),
        &["sample_id".to_string(), p.column.clone()],
        p.sample_ids.iter().zip(&p.values).map(|(id, v)| vec![id.clone(), v.clone()]),
    )?;

    write_json(&dir.join(MANIFEST), a.manifest)
}

/// Reads the per-fold metrics of every model in a cv_metrics.csv file.
pub fn read_cv_metrics(path: &Path) -> Result<Vec<ModelEvaluation>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::output(path, e))?;
    // (model, metric name, (fold, value) pairs) in first-seen order
    type Folds = (String, String, Vec<(usize, f64)>);
    let mut models: Vec<Folds> = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| CliError::output(path, e))?;
        let bad = |what: &str| CliError::output(path, format!("row {}: bad {what}", i + 1));
        let model = rec.get(0).ok_or_else(|| bad("model"))?.to_string();
        let fold: usize = rec.get(1).and_then(|s| s.parse().ok()).ok_or_else(|| bad("fold"))?;
        let metric = rec.get(2).ok_or_else(|| bad("metric_name"))?.to_string();
        let value: f64 = rec.get(3).and_then(|s| s.parse().ok()).ok_or_else(|| bad("value"))?;
        match models.iter_mut().find(|m| m.0 == model) {
            Some(m) => m.2.push((fold, value)),
            None => models.push((model, metric, vec![(fold, value)])),
        }
    }
    Ok(models
        .into_iter()
        .map(|(model, metric, mut folds)| {
            folds.sort_by_key(|f| f.0);
            ModelEvaluation::new(model, metric, folds.into_iter().map(|f| f.1).collect(), None)
        })
        .collect())
}
