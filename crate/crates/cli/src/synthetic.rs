//! Writes a complete synthetic input bundle: view CSVs, a cohort file, an
//! event registry and matching data and model configs.

use std::fs;
use std::path::{Path, PathBuf};

use mvfuse_core::synthetic::{planted_views, synthetic_registry, PlantedConfig, RegistryConfig};
use ndarray::Axis;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{CliError, Result, StageExt};

#[derive(Debug, Clone, PartialEq)]
pub struct BundleConfig {
    pub views: PlantedConfig,
    /// Outcome weight of the joint score and of each view's individual score.
    pub joint_weight: f64,
    pub individual_weight: f64,
    pub registry: RegistryConfig,
    /// Share of samples whose second view is left out of its file.
    pub missing_fraction: f64,
    pub alpha_grid: Vec<f64>,
    pub seed: u64,
}

impl Default for BundleConfig {
    fn default() -> Self {
        Self {
            views: PlantedConfig {
                n_samples: 600,
                noise_sd: 0.3,
                ..PlantedConfig::default()
            },
            joint_weight: 1.0,
            individual_weight: 1.0,
            registry: RegistryConfig::default(),
            missing_fraction: 0.0,
            alpha_grid: vec![0.001, 0.005, 0.01, 0.02, 0.05],
            seed: 0,
        }
    }
}

impl BundleConfig {
    pub fn with_seed(seed: u64) -> Self {
        let mut c = Self::default();
        c.set_seed(seed);
        c
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.views.seed = seed;
        self.registry.seed = seed.wrapping_add(1);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BundleFiles {
    pub data_config: PathBuf,
    pub model_config: PathBuf,
    pub views: Vec<PathBuf>,
    pub cohort: PathBuf,
    pub events: PathBuf,
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::output(path, e)
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| CliError::output(path, e)
}

pub fn write_bundle(dir: &Path, cfg: &BundleConfig) -> Result<BundleFiles> {
    if !(0.0..1.0).contains(&cfg.missing_fraction) {
        return Err(CliError::config("missing_fraction", "must lie in [0, 1)"));
    }
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let data = planted_views(&cfg.views).stage("synthetic")?;
    let n = cfg.views.n_samples;
    let ids = data.datasets[0].sample_ids().to_vec();

    let mut lp = data.joint_scores.sum_axis(Axis(1)) * cfg.joint_weight;
    for s in &data.individual_scores {
        lp = lp + s.sum_axis(Axis(1)) * cfg.individual_weight;
    }
    let registry = synthetic_registry(&ids, lp.as_slice().expect("contiguous"), &cfg.registry).stage("synthetic")?;

    let mut dropped = vec![false; n];
    let n_drop = (cfg.missing_fraction * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(2)));
    for &i in &order[..n_drop] {
        dropped[i] = true;
    }

    let mut view_paths = Vec::new();
    for (v, ds) in data.datasets.iter().enumerate() {
        let path = dir.join(format!("{}.csv", ds.name));
        let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
        let mut header = vec!["sample_id".to_string()];
        header.extend(ds.feature_names().iter().cloned());
        w.write_record(&header).map_err(csv_err(&path))?;
        for (i, row) in ds.values().rows().into_iter().enumerate() {
            if v == 1 && dropped[i] {
                continue;
            }
            let mut rec = vec![ids[i].clone()];
            rec.extend(row.iter().map(|x| format!("{x:.6}")));
            w.write_record(&rec).map_err(csv_err(&path))?;
        }
        w.flush().map_err(io_err(&path))?;
        view_paths.push(path);
    }

    let cohort = dir.join("cohort.csv");
    let mut w = csv::Writer::from_path(&cohort).map_err(csv_err(&cohort))?;
    w.write_record(["subject_id", "baseline_date", "censor_date", "age", "sex"])
        .map_err(csv_err(&cohort))?;
    for s in &registry.subjects {
        w.write_record([
            s.subject_id.clone(),
            s.baseline_date.to_string(),
            s.censor_date.map(|d| d.to_string()).unwrap_or_default(),
            s.age.to_string(),
            s.sex.to_string(),
        ])
        .map_err(csv_err(&cohort))?;
    }
    w.flush().map_err(io_err(&cohort))?;

    let events = dir.join("events.csv");
    let mut w = csv::Writer::from_path(&events).map_err(csv_err(&events))?;
    w.write_record(["subject_id", "code_system", "code", "date"]).map_err(csv_err(&events))?;
    for e in &registry.events {
        w.write_record([e.subject_id.clone(), e.code_system.to_string(), e.code.clone(), e.date.to_string()])
            .map_err(csv_err(&events))?;
    }
    w.flush().map_err(io_err(&events))?;

    let ranks: Vec<usize> = cfg.views.individual_ranks.iter().map(|r| r + cfg.views.joint_rank).collect();
    let mut data_yaml = String::from("modalities:\n");
    for (ds, r) in data.datasets.iter().zip(&ranks) {
        data_yaml.push_str(&format!("  - name: {0}\n    path: {0}.csv\n    rank: {r}\n", ds.name));
    }
    data_yaml.push_str(
        "cohort:\n  path: .\n  file: cohort.csv\n\
         endpoint:\n  name: atrial_fibrillation\n  event_codes:\n    - {system: icd10, code: I48}\n\
         \x20 exclusion_codes:\n    - {system: icd10, code: I20-I22}\n\
         events_path: events.csv\n",
    );
    let data_config = dir.join("data.yaml");
    fs::write(&data_config, data_yaml).map_err(io_err(&data_config))?;

    let grid = cfg.alpha_grid.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ");
    let model_yaml = format!(
        "integration:\n  early:\n    use: false\n  early_pca:\n    use: false\n  ajive:\n    use: true\n  gfa:\n    use: false\n\
         prediction:\n  logregrssm:\n    use: true\n    params:\n      alpha_grid: [{grid}]\n\
         task: classification\n\
         years_risk_classification: 5\n\
         test_size: 0.2\n\
         n_folds: 10\n\
         seed: {}\n\
         end_study_date: {}\n\
         compare_single_views: true\n\
         out_path: results\n",
        cfg.seed, cfg.registry.end_study
    );
    let model_config = dir.join("model.yaml");
    fs::write(&model_config, model_yaml).map_err(io_err(&model_config))?;

    Ok(BundleFiles {
        data_config,
        model_config,
        views: view_paths,
        cohort,
        events,
    })
}
