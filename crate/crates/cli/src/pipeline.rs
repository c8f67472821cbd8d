//! One-call run: load, align, standardize, integrate, derive the cohort,
//! split, cross-validate, fit, test and write outputs.

use std::collections::{HashMap, HashSet};
use std::time::Instant;

use log::info;
use mvfuse_core::cohort::{
    apply_baseline_exclusion, build_survival_outcome, derive_endpoint, label_classification, load_cohort_csv,
    load_events_csv, CohortTable,
};
use mvfuse_core::downstream::{
    coxph_elasticnet_fit, coxph_risk_score, dbscan, kmeans, logistic_l1_fit, logistic_predict_proba, ClusteringResult,
    FittedModel, GaussianNb, PenaltyConfig,
};
use mvfuse_core::evaluation::{
    auc, compare_models, concordance_index, select_alpha, stratified_kfold, stratified_split, Comparison,
    ModelEvaluation, Sided,
};
use mvfuse_core::integration::union_with_mask;
use mvfuse_core::{
    align_samples, fit_integration, load_modality_csv, pca, MergedRepresentation, ModalityDataset, ObservedMask,
    RankSelector, Standardizer,
};
use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::Serialize;

use crate::config::{Algorithm, DataConfig, ModelConfig, PredictionParams, Task};
use crate::error::{CliError, Result, StageExt};
use crate::output::{self, Predictions, RunArtifacts};

/// Level and sidedness of the paired fold comparisons.
pub const COMPARISON_LEVEL: f64 = 0.10;
pub const COMPARISON_SIDED: Sided = Sided::Greater;
/// Model name of the merged representation in evaluation tables.
pub const MERGED_MODEL: &str = "merged";

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Replace the contents of a non-empty output directory.
    pub force: bool,
    /// Add wall-clock stage times to the manifest (makes it non-reproducible).
    pub record_timing: bool,
}

/// Supervised outcome for a set of subjects.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Binary(Vec<bool>),
    Survival { time: Vec<f64>, event: Vec<bool> },
}

impl Outcome {
    /// Labels used to stratify splits and folds.
    pub fn strata(&self) -> Vec<bool> {
        match self {
            Outcome::Binary(y) => y.clone(),
            Outcome::Survival { event, .. } => event.clone(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Outcome::Binary(y) => y.len(),
            Outcome::Survival { time, .. } => time.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, rows: &[usize]) -> Outcome {
        match self {
            Outcome::Binary(y) => Outcome::Binary(rows.iter().map(|&i| y[i]).collect()),
            Outcome::Survival { time, event } => Outcome::Survival {
                time: rows.iter().map(|&i| time[i]).collect(),
                event: rows.iter().map(|&i| event[i]).collect(),
            },
        }
    }

    pub fn metric_name(&self) -> &'static str {
        match self {
            Outcome::Binary(_) => "auc",
            Outcome::Survival { .. } => "c_index",
        }
    }

    /// AUC of probabilities or concordance of risk scores.
    pub fn score(&self, predictions: &[f64]) -> mvfuse_core::Result<f64> {
        match self {
            Outcome::Binary(y) => auc(y, predictions),
            Outcome::Survival { time, event } => concordance_index(time, event, predictions),
        }
    }
}

/// A fitted supervised model in serializable form.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum SupervisedFit {
    Penalized(FittedModel),
    NaiveBayes(GaussianNb),
}

/// Fits `algorithm` on the training rows and scores `x_eval`: class-1
/// probabilities for classification, linear risk for survival.
pub fn fit_and_predict(
    algorithm: Algorithm,
    params: &PredictionParams,
    alpha: f64,
    names: &[String],
    x_train: ArrayView2<f64>,
    y_train: &Outcome,
    x_eval: ArrayView2<f64>,
) -> mvfuse_core::Result<(SupervisedFit, Array1<f64>)> {
    let penalty = PenaltyConfig::new(alpha, params.l1_ratio);
    match (algorithm, y_train) {
        (Algorithm::Logregrssm, Outcome::Binary(y)) => {
            let y = Array1::from_iter(y.iter().map(|&b| f64::from(u8::from(b))));
            let m = logistic_l1_fit(x_train, y.view(), names, penalty)?;
            let p = logistic_predict_proba(&m, x_eval)?;
            Ok((SupervisedFit::Penalized(m), p))
        }
        (Algorithm::GaussianNb, Outcome::Binary(y)) => {
            let y = Array1::from_iter(y.iter().map(|&b| f64::from(u8::from(b))));
            let m = GaussianNb::fit(x_train, y.view())?;
            let p = m.predict_proba(x_eval)?;
            Ok((SupervisedFit::NaiveBayes(m), p))
        }
        (Algorithm::Coxph, Outcome::Survival { time, event }) => {
            let t = Array1::from(time.clone());
            let m = coxph_elasticnet_fit(x_train, t.view(), event, names, penalty)?;
            let r = coxph_risk_score(&m, x_eval)?;
            Ok((SupervisedFit::Penalized(m), r))
        }
        _ => Err(mvfuse_core::Error::Config(format!(
            "{} does not fit this outcome type",
            algorithm.key()
        ))),
    }
}

/// Held-out metric of each fold, in fold order.
#[allow(clippy::too_many_arguments)]
pub fn cross_validate(
    algorithm: Algorithm,
    params: &PredictionParams,
    alpha: f64,
    names: &[String],
    x: ArrayView2<f64>,
    outcome: &Outcome,
    folds: &[usize],
    n_folds: usize,
) -> mvfuse_core::Result<Vec<f64>> {
    (0..n_folds)
        .map(|f| {
            let fit_rows: Vec<usize> = (0..folds.len()).filter(|&i| folds[i] != f).collect();
            let eval_rows: Vec<usize> = (0..folds.len()).filter(|&i| folds[i] == f).collect();
            let xf = x.select(Axis(0), &fit_rows);
            let xe = x.select(Axis(0), &eval_rows);
            let (_, pred) = fit_and_predict(algorithm, params, alpha, names, xf.view(), &outcome.select(&fit_rows), xe.view())?;
            outcome.select(&eval_rows).score(pred.as_slice().expect("contiguous"))
        })
        .collect()
}

/// Cross-validation over the alpha grid (a single pass for unpenalized
/// models) and the selected alpha.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaSearch {
    pub alphas: Vec<f64>,
    pub fold_metrics: Vec<Vec<f64>>,
    pub selected: usize,
}

impl AlphaSearch {
    pub fn alpha(&self) -> f64 {
        self.alphas[self.selected]
    }

    pub fn selected_folds(&self) -> &[f64] {
        &self.fold_metrics[self.selected]
    }
}

pub fn search_alpha(
    algorithm: Algorithm,
    params: &PredictionParams,
    names: &[String],
    x: ArrayView2<f64>,
    outcome: &Outcome,
    folds: &[usize],
    n_folds: usize,
) -> mvfuse_core::Result<AlphaSearch> {
    let alphas = match algorithm {
        Algorithm::Logregrssm | Algorithm::Coxph => params.alpha_grid.clone(),
        _ => vec![0.0],
    };
    let fold_metrics = alphas
        .iter()
        .map(|&a| cross_validate(algorithm, params, a, names, x, outcome, folds, n_folds))
        .collect::<mvfuse_core::Result<Vec<_>>>()?;
    let selected = select_alpha(&alphas, &fold_metrics)?;
    Ok(AlphaSearch {
        alphas,
        fold_metrics,
        selected,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CohortCounts {
    /// Samples with a merged representation.
    pub represented: usize,
    pub cohort_rows: usize,
    pub excluded_at_baseline: usize,
    pub without_representation: usize,
    /// Dropped by the classification horizon rule.
    pub unlabelled: usize,
    pub analysed: usize,
    pub train: usize,
    pub test: usize,
    /// Positive labels or observed events among analysed subjects.
    pub cases: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub task: Task,
    pub n_components: usize,
    pub counts: CohortCounts,
    pub selected_alpha: Option<f64>,
    pub models: Vec<ModelEvaluation>,
    pub comparisons: Vec<Comparison>,
}

/// Loads, filters and standardizes every modality; returns datasets on a
/// shared sample order and, when imputing, the observation mask.
pub fn prepare_views(data: &DataConfig, latent_impute: bool) -> Result<(Vec<ModalityDataset>, Option<ObservedMask>)> {
    let mut views = Vec::with_capacity(data.modalities.len());
    for m in &data.modalities {
        let mut ds = load_modality_csv(&m.path, &m.id_column).stage("load")?;
        ds.name = m.name.clone();
        if let Some(f) = &m.features {
            ds = ds.select_features(f).stage("load")?;
        }
        info!(target: "load", "{}: {} samples x {} features", m.name, ds.n_samples(), ds.n_features());
        views.push(ds);
    }
    if latent_impute {
        // each view is scaled on the samples that observe it
        let scaled = views
            .iter()
            .map(|v| Standardizer::fit(v)?.transform(v))
            .collect::<mvfuse_core::Result<Vec<_>>>()
            .stage("standardize")?;
        let (out, mask) = union_with_mask(&scaled).stage("align")?;
        info!(target: "align", "union of samples: {}", out[0].n_samples());
        Ok((out, Some(mask)))
    } else {
        let aligned = align_samples(&views).stage("align")?;
        info!(target: "align", "samples shared by all views: {}", aligned[0].n_samples());
        let scaled = aligned
            .iter()
            .map(|v| Standardizer::fit(v)?.transform(v))
            .collect::<mvfuse_core::Result<Vec<_>>>()
            .stage("standardize")?;
        Ok((scaled, None))
    }
}

/// Eligible cohort subjects that have a merged representation.
fn derive_cohort(data: &DataConfig, model: &ModelConfig, represented: &[String], counts: &mut CohortCounts) -> Result<CohortTable> {
    let mut cohort = load_cohort_csv(&data.cohort.file_path(), &data.cohort.columns, model.end_study_date).stage("cohort")?;
    counts.cohort_rows = cohort.len();
    let events = load_events_csv(&data.events_path).stage("cohort")?;
    let definition = data.endpoint.definition().stage("cohort")?;
    let dates = derive_endpoint(&events, &definition);
    cohort.attach_endpoints(&dates);
    let eligible = apply_baseline_exclusion(&cohort, &dates);
    counts.excluded_at_baseline = cohort.len() - eligible.len();
    let ids: HashSet<&str> = represented.iter().map(String::as_str).collect();
    let joined = eligible.retain_ids(&ids);
    counts.without_representation = eligible.len() - joined.len();
    info!(
        target: "cohort",
        "{} subjects, {} excluded at baseline, {} without a merged representation",
        cohort.len(),
        counts.excluded_at_baseline,
        counts.without_representation
    );
    for name in &model.cohort_cov {
        if !joined.covariate_names.contains(name) {
            return Err(CliError::config(
                "cohort_cov",
                format!("`{name}` is not a cohort column; available: {}", joined.covariate_names.join(", ")),
            ));
        }
    }
    Ok(joined)
}

/// Rows of `scores` for the cohort subjects, followed by the chosen
/// covariates.
fn design_matrix(
    scores: ArrayView2<f64>,
    score_names: &[String],
    sample_ids: &[String],
    cohort: &CohortTable,
    covariates: &[String],
) -> (Array2<f64>, Vec<String>) {
    let row_of: HashMap<&str, usize> = sample_ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let cov_idx: Vec<usize> = covariates
        .iter()
        .map(|c| cohort.covariate_names.iter().position(|n| n == c).expect("checked covariate"))
        .collect();
    let k = scores.ncols();
    let x = Array2::from_shape_fn((cohort.len(), k + cov_idx.len()), |(i, j)| {
        let s = &cohort.subjects[i];
        if j < k {
            scores[[row_of[s.subject_id.as_str()], j]]
        } else {
            s.covariates[cov_idx[j - k]]
        }
    });
    let mut names = score_names.to_vec();
    names.extend(covariates.iter().cloned());
    (x, names)
}

/// Per-view baseline scores: PCA of the view with its configured rank, or
/// the standardized view itself when no rank is configured.
fn single_view_scores(view: &ModalityDataset, selector: Option<RankSelector>) -> Result<(Array2<f64>, Vec<String>)> {
    match selector {
        Some(sel) => {
            let (_, scores) = pca(view, sel).stage("baseline")?;
            let names = (0..scores.ncols()).map(|j| format!("{}_PC{}", view.name, j + 1)).collect();
            Ok((scores, names))
        }
        None => Ok((view.values().to_owned(), view.feature_names().to_vec())),
    }
}

/// Runs the full pipeline and writes every output file.
pub fn run_pipeline(data: &DataConfig, model: &ModelConfig, options: RunOptions) -> Result<RunSummary> {
    let started = Instant::now();
    let mut timing: Vec<(String, f64)> = Vec::new();
    let mut lap = {
        let mut last = Instant::now();
        move |stage: &str, timing: &mut Vec<(String, f64)>| {
            let now = Instant::now();
            timing.push((stage.to_string(), (now - last).as_secs_f64()));
            last = now;
        }
    };
    output::prepare_dir(&model.out_path, options.force)?;
    let integration_config = model.integration_config(&data.modalities)?;

    let (views, mask) = prepare_views(data, model.latent_impute)?;
    lap("load", &mut timing);
    let (_, rep) = fit_integration(&views, &integration_config, mask.as_ref()).stage("integrate")?;
    info!(target: "integrate", "{} components: {}", rep.n_components(), rep.component_names().join(", "));
    lap("integrate", &mut timing);

    let mut counts = CohortCounts {
        represented: rep.sample_ids.len(),
        ..CohortCounts::default()
    };
    let joined = derive_cohort(data, model, &rep.sample_ids, &mut counts)?;
    let analysed = match model.task {
        Task::Classification => label_classification(&joined, model.years_risk_classification).stage("cohort")?,
        Task::Survival => build_survival_outcome(&joined).stage("cohort")?,
        Task::Clustering => joined.clone(),
    };
    counts.unlabelled = joined.len() - analysed.len();
    counts.analysed = analysed.len();
    if analysed.is_empty() {
        return Err(CliError::Stage {
            stage: "cohort",
            source: mvfuse_core::Error::EmptyCohort("analysis cohort".into()),
        });
    }
    let (x, names) = design_matrix(
        rep.scores.view(),
        &rep.component_names(),
        &rep.sample_ids,
        &analysed,
        &model.cohort_cov,
    );
    let subject_ids = analysed.subject_ids();
    lap("cohort", &mut timing);

    let (artifacts_pred, summary_json, models, comparisons, selected_alpha) = if model.task == Task::Clustering {
        let result = cluster(model, x.view())?;
        counts.analysed = x.nrows();
        let preds = Predictions::clusters(subject_ids, &result.assignments);
        let summary = serde_json::json!({
            "task": model.task,
            "algorithm": model.prediction.key(),
            "features": names,
            "result": result,
        });
        (preds, summary, Vec::new(), Vec::new(), None)
    } else {
        let outcome = match model.task {
            Task::Classification => Outcome::Binary(analysed.subjects.iter().map(|s| s.label == Some(1)).collect()),
            _ => Outcome::Survival {
                time: analysed.subjects.iter().map(|s| s.time_years.expect("survival time")).collect(),
                event: analysed.subjects.iter().map(|s| s.event == Some(true)).collect(),
            },
        };
        counts.cases = outcome.strata().iter().filter(|&&c| c).count();
        let (train, test) = stratified_split(&outcome.strata(), model.test_size, model.seed).stage("split")?;
        counts.train = train.len();
        counts.test = test.len();
        info!(target: "split", "train {}, test {}, cases {}", train.len(), test.len(), counts.cases);
        let y_train = outcome.select(&train);
        let y_test = outcome.select(&test);
        let folds = stratified_kfold(&y_train.strata(), model.n_folds, model.seed).stage("cv")?;

        let mut candidates: Vec<(String, Array2<f64>, Vec<String>)> = vec![(MERGED_MODEL.to_string(), x.clone(), names.clone())];
        if model.compare_single_views {
            let selectors: Vec<Option<RankSelector>> = data
                .modalities
                .iter()
                .map(|m| {
                    m.rank
                        .map(RankSelector::Fixed)
                        .or(m.variance_fraction.map(RankSelector::VarianceFraction))
                })
                .collect();
            for (view, sel) in views.iter().zip(selectors) {
                let (scores, score_names) = single_view_scores(view, sel)?;
                let (xv, nv) = design_matrix(scores.view(), &score_names, view.sample_ids(), &analysed, &model.cohort_cov);
                candidates.push((view.name.clone(), xv, nv));
            }
        }

        let mut models = Vec::new();
        let mut merged_fit = None;
        let mut merged_search = None;
        let mut test_scores = Array1::zeros(0);
        for (name, xm, nm) in &candidates {
            let x_train = xm.select(Axis(0), &train);
            let x_test = xm.select(Axis(0), &test);
            let search = search_alpha(model.prediction, &model.prediction_params, nm, x_train.view(), &y_train, &folds, model.n_folds)
                .stage("cv")?;
            let (fit, pred) = fit_and_predict(
                model.prediction,
                &model.prediction_params,
                search.alpha(),
                nm,
                x_train.view(),
                &y_train,
                x_test.view(),
            )
            .stage("fit")?;
            let test_metric = y_test.score(pred.as_slice().expect("contiguous")).stage("test")?;
            let eval = ModelEvaluation::new(name.clone(), outcome.metric_name(), search.selected_folds().to_vec(), Some(test_metric));
            info!(
                target: "cv",
                "{name}: alpha {}, mean {} {:.4} (sd {:.4}), test {:.4}",
                search.alpha(),
                eval.metric_name,
                eval.fold_mean,
                eval.fold_std,
                test_metric
            );
            models.push(eval);
            if merged_fit.is_none() {
                merged_fit = Some(fit);
                test_scores = pred;
                merged_search = Some(search);
            }
        }
        let comparisons = if models.len() > 1 {
            compare_models(&models, COMPARISON_SIDED, COMPARISON_LEVEL).stage("compare")?
        } else {
            Vec::new()
        };
        let search = merged_search.expect("merged model evaluated");
        let penalized = matches!(model.prediction, Algorithm::Logregrssm | Algorithm::Coxph);
        let selected_alpha = penalized.then(|| search.alpha());
        let test_ids: Vec<String> = test.iter().map(|&i| subject_ids[i].clone()).collect();
        let preds = match model.task {
            Task::Classification => Predictions::scores("probability", test_ids, test_scores.to_vec()),
            _ => Predictions::scores("risk_score", test_ids, test_scores.to_vec()),
        };
        let summary = serde_json::json!({
            "task": model.task,
            "algorithm": model.prediction.key(),
            "metric": outcome.metric_name(),
            "alpha_search": penalized.then_some(&search),
            "model": merged_fit,
        });
        (preds, summary, models, comparisons, selected_alpha)
    };
    lap("downstream", &mut timing);

    let summary = RunSummary {
        task: model.task,
        n_components: rep.n_components(),
        counts,
        selected_alpha,
        models,
        comparisons,
    };
    let mut manifest = serde_json::json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "seed": model.seed,
        "data_config": data,
        "model_config": model,
        "integration": {
            "method": model.integration.key(),
            "components": rep.component_names(),
        },
        "cohort": summary.counts,
        "selected_alpha": summary.selected_alpha,
        "files": output::file_names(&rep, !summary.comparisons.is_empty()),
    });
    if options.record_timing {
        timing.push(("total".into(), started.elapsed().as_secs_f64()));
        let map: serde_json::Map<String, serde_json::Value> =
            timing.iter().map(|(k, v)| (k.clone(), serde_json::json!(v))).collect();
        manifest["timing_seconds"] = serde_json::Value::Object(map);
    }
    for (stage, secs) in &timing {
        info!(target: "timing", "{stage}: {secs:.3} s");
    }
    output::write_all(
        &model.out_path,
        &RunArtifacts {
            representation: &rep,
            model_summary: &summary_json,
            models: &summary.models,
            comparisons: &summary.comparisons,
            predictions: &artifacts_pred,
            manifest: &manifest,
        },
    )?;
    info!(target: "output", "results written to {}", model.out_path.display());
    Ok(summary)
}

fn cluster(model: &ModelConfig, x: ArrayView2<f64>) -> Result<ClusteringResult> {
    // put features on a common scale before distance-based clustering
    let ds = ModalityDataset::new(
        "features",
        (0..x.nrows()).map(|i| i.to_string()).collect(),
        (0..x.ncols()).map(|j| j.to_string()).collect(),
        x.to_owned(),
    )
    .stage("cluster")?;
    let z = Standardizer::fit(&ds)
        .and_then(|s| s.transform(&ds))
        .stage("cluster")?;
    let p = &model.prediction_params;
    match model.prediction {
        Algorithm::Kmeans => kmeans(z.values(), p.k.expect("validated k"), model.seed).stage("cluster"),
        Algorithm::Dbscan => dbscan(z.values(), p.eps.expect("validated eps"), p.min_pts.expect("validated min_pts")).stage("cluster"),
        _ => unreachable!("clustering task implies a clustering algorithm"),
    }
}

/// The merged representation alone, for callers that only integrate.
pub fn integrate_only(data: &DataConfig, model: &ModelConfig) -> Result<MergedRepresentation> {
    let config = model.integration_config(&data.modalities)?;
    let (views, mask) = prepare_views(data, model.latent_impute)?;
    let (_, rep) = fit_integration(&views, &config, mask.as_ref()).stage("integrate")?;
    Ok(rep)
}
