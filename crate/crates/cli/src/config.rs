//! YAML data and model configuration.
//!
//! Raw YAML is walked by key path so that every error names the offending
//! entry (for example `prediction.coxph.params.alpha`). The validated
//! structs serialize to a canonical form that is echoed in the run manifest
//! and parses back to an equal value.

use std::fmt;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use mvfuse_core::cohort::{CodeSystem, CohortColumns, EndpointDefinition};
use mvfuse_core::{IntegrationConfig, Method};
use serde::{Deserialize, Serialize};
use serde_yaml::Value;

use crate::error::{CliError, Result};

pub const DEFAULT_TEST_SIZE: f64 = 0.2;
pub const DEFAULT_N_FOLDS: usize = 10;
pub const DEFAULT_HORIZON_YEARS: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalityConfig {
    pub name: String,
    pub path: PathBuf,
    pub id_column: String,
    /// Keep only these features, in this order.
    pub features: Option<Vec<String>>,
    pub rank: Option<usize>,
    pub variance_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortConfig {
    /// Directory holding the cohort file.
    pub path: PathBuf,
    pub file: String,
    pub columns: CohortColumns,
}

impl CohortConfig {
    pub fn file_path(&self) -> PathBuf {
        self.path.join(&self.file)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeEntry {
    pub system: CodeSystem,
    pub code: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub name: String,
    pub event_codes: Vec<CodeEntry>,
    pub exclusion_codes: Vec<CodeEntry>,
}

impl EndpointConfig {
    pub fn definition(&self) -> mvfuse_core::Result<EndpointDefinition> {
        let pairs = |codes: &[CodeEntry]| codes.iter().map(|c| (c.system, c.code.clone())).collect::<Vec<_>>();
        let events = pairs(&self.event_codes);
        let exclusions = pairs(&self.exclusion_codes);
        fn as_ref(v: &[(CodeSystem, String)]) -> Vec<(CodeSystem, &str)> {
            v.iter().map(|(s, c)| (*s, c.as_str())).collect()
        }
        EndpointDefinition::new(self.name.clone(), &as_ref(&events), &as_ref(&exclusions))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub modalities: Vec<ModalityConfig>,
    pub cohort: CohortConfig,
    pub endpoint: EndpointConfig,
    pub events_path: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegrationMethod {
    Early,
    EarlyPca,
    Ajive,
    Gfa,
}

impl IntegrationMethod {
    pub const KEYS: [&'static str; 4] = ["early", "early_pca", "ajive", "gfa"];

    fn from_key(key: &str) -> Option<Self> {
        Some(match key {
            "early" => Self::Early,
            "early_pca" => Self::EarlyPca,
            "ajive" => Self::Ajive,
            "gfa" => Self::Gfa,
            _ => return None,
        })
    }

    pub fn key(self) -> &'static str {
        Self::KEYS[self as usize]
    }

    pub fn method(self) -> Method {
        match self {
            Self::Early => Method::Early,
            Self::EarlyPca => Method::EarlyPca,
            Self::Ajive => Method::Ajive,
            Self::Gfa => Method::Gfa,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegrationParams {
    pub max_factors: usize,
    pub prune_fraction: f64,
    pub tolerance: f64,
    pub max_iter: usize,
    pub resamples: usize,
    pub percentile: f64,
}

impl Default for IntegrationParams {
    fn default() -> Self {
        let d = IntegrationConfig::default();
        Self {
            max_factors: d.max_factors,
            prune_fraction: d.prune_fraction,
            tolerance: d.gfa_tolerance,
            max_iter: d.gfa_max_iter,
            resamples: d.ajive_resamples,
            percentile: d.ajive_percentile,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Logregrssm,
    Coxph,
    GaussianNb,
    Kmeans,
    Dbscan,
}

impl Algorithm {
    pub const KEYS: [&'static str; 5] = ["logregrssm", "coxph", "gaussian_nb", "kmeans", "dbscan"];

    fn from_key(key: &str) -> Option<Self> {
        Some(match key {
            "logregrssm" => Self::Logregrssm,
            "coxph" => Self::Coxph,
            "gaussian_nb" => Self::GaussianNb,
            "kmeans" => Self::Kmeans,
            "dbscan" => Self::Dbscan,
            _ => return None,
        })
    }

    pub fn key(self) -> &'static str {
        Self::KEYS[self as usize]
    }

    pub fn task(self) -> Task {
        match self {
            Self::Logregrssm | Self::GaussianNb => Task::Classification,
            Self::Coxph => Task::Survival,
            Self::Kmeans | Self::Dbscan => Task::Clustering,
        }
    }

    fn param_keys(self) -> &'static [&'static str] {
        match self {
            Self::Logregrssm | Self::Coxph => &["alpha", "alpha_grid", "l1_ratio"],
            Self::GaussianNb => &[],
            Self::Kmeans => &["k"],
            Self::Dbscan => &["eps", "min_pts"],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Classification,
    Survival,
    Clustering,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Classification => "classification",
            Task::Survival => "survival",
            Task::Clustering => "clustering",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionParams {
    /// Candidate penalty weights; a single entry skips selection.
    pub alpha_grid: Vec<f64>,
    pub l1_ratio: f64,
    pub k: Option<usize>,
    pub eps: Option<f64>,
    pub min_pts: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub integration: IntegrationMethod,
    pub integration_params: IntegrationParams,
    pub prediction: Algorithm,
    pub prediction_params: PredictionParams,
    pub task: Task,
    pub years_risk_classification: f64,
    pub latent_impute: bool,
    pub test_size: f64,
    pub n_folds: usize,
    pub seed: u64,
    pub end_study_date: Option<NaiveDate>,
    pub cohort_cov: Vec<String>,
    pub out_path: PathBuf,
    /// Also evaluate one model per view on that view alone.
    pub compare_single_views: bool,
}

impl ModelConfig {
    /// Core integration settings for the given modalities.
    pub fn integration_config(&self, modalities: &[ModalityConfig]) -> Result<IntegrationConfig> {
        let mut c = IntegrationConfig::new(self.integration.method());
        let p = &self.integration_params;
        c.max_factors = p.max_factors;
        c.prune_fraction = p.prune_fraction;
        c.gfa_tolerance = p.tolerance;
        c.gfa_max_iter = p.max_iter;
        c.ajive_resamples = p.resamples;
        c.ajive_percentile = p.percentile;
        c.seed = self.seed;
        let ranks: Vec<Option<usize>> = modalities.iter().map(|m| m.rank).collect();
        let fractions: Vec<Option<f64>> = modalities.iter().map(|m| m.variance_fraction).collect();
        if ranks.iter().all(Option::is_some) {
            c.per_view_ranks = Some(ranks.into_iter().flatten().collect());
        } else if fractions.iter().all(Option::is_some) {
            let first = fractions[0];
            if fractions.iter().any(|f| *f != first) {
                return Err(CliError::config(
                    "modalities",
                    "variance_fraction must be the same for every modality",
                ));
            }
            c.variance_fraction = first;
        } else if ranks.iter().any(Option::is_some) || fractions.iter().any(Option::is_some) {
            return Err(CliError::config(
                "modalities",
                "give every modality a rank, or every modality a variance_fraction",
            ));
        }
        c.validate()
            .map_err(|e| CliError::config(format!("integration.{}", self.integration.key()), e.to_string()))?;
        Ok(c)
    }
}

/// Command-line values that replace the corresponding YAML entries.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub cohort_path: Option<PathBuf>,
    pub cohort_file: Option<String>,
    pub end_study_date: Option<NaiveDate>,
    pub out_path: Option<PathBuf>,
    pub cohort_cov: Option<Vec<String>>,
    pub latent_impute: Option<bool>,
    pub test_size: Option<f64>,
    pub n_folds: Option<usize>,
    pub seed: Option<u64>,
}

/// A YAML value together with its key path.
#[derive(Clone, Copy)]
struct Node<'a> {
    value: &'a Value,
    path: &'a str,
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

impl<'a> Node<'a> {
    fn err(&self, message: impl Into<String>) -> CliError {
        CliError::config(self.path, message)
    }

    fn mapping(&self) -> Result<&'a serde_yaml::Mapping> {
        self.value.as_mapping().ok_or_else(|| self.err("expected a mapping"))
    }

    fn keys(&self) -> Result<Vec<&'a str>> {
        self.mapping()?
            .keys()
            .map(|k| k.as_str().ok_or_else(|| self.err("keys must be strings")))
            .collect()
    }

    fn only_keys(&self, allowed: &[&str]) -> Result<()> {
        for k in self.keys()? {
            if !allowed.contains(&k) {
                return Err(CliError::config(
                    join(self.path, k),
                    format!("unknown key; valid keys are {}", allowed.join(", ")),
                ));
            }
        }
        Ok(())
    }

    fn get(&self, key: &str) -> Result<Option<&'a Value>> {
        Ok(self.mapping()?.get(key).filter(|v| !v.is_null()))
    }
}

fn missing(path: &str) -> CliError {
    CliError::config(path, "required key is missing")
}

fn as_str(v: &Value, path: &str) -> Result<String> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        _ => Err(CliError::config(path, "expected a string")),
    }
}

fn as_f64(v: &Value, path: &str) -> Result<f64> {
    v.as_f64()
        .filter(|x| x.is_finite())
        .ok_or_else(|| CliError::config(path, "expected a finite number"))
}

fn as_usize(v: &Value, path: &str) -> Result<usize> {
    v.as_u64()
        .map(|x| x as usize)
        .ok_or_else(|| CliError::config(path, "expected a nonnegative integer"))
}

fn as_bool(v: &Value, path: &str) -> Result<bool> {
    v.as_bool().ok_or_else(|| CliError::config(path, "expected true or false"))
}

fn as_seq<'a>(v: &'a Value, path: &str) -> Result<&'a Vec<Value>> {
    v.as_sequence().ok_or_else(|| CliError::config(path, "expected a list"))
}

fn as_date(v: &Value, path: &str) -> Result<NaiveDate> {
    let s = as_str(v, path)?;
    NaiveDate::parse_from_str(&s, "%Y-%m-%d").map_err(|_| CliError::config(path, format!("`{s}` is not a YYYY-MM-DD date")))
}

fn as_strings(v: &Value, path: &str) -> Result<Vec<String>> {
    as_seq(v, path)?
        .iter()
        .enumerate()
        .map(|(i, x)| as_str(x, &format!("{path}[{i}]")))
        .collect()
}

fn read_text(path: &Path, key: &str) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::config(key, format!("{}: {e}", path.display())))
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn code_list(v: Option<&Value>, path: &str) -> Result<Vec<CodeEntry>> {
    let Some(v) = v else {
        return Ok(Vec::new());
    };
    as_seq(v, path)?
        .iter()
        .enumerate()
        .map(|(i, item)| {
            let p = format!("{path}[{i}]");
            let node = Node { value: item, path: &p };
            node.only_keys(&["system", "code"])?;
            let system_path = join(&p, "system");
            let system = as_str(node.get("system")?.ok_or_else(|| missing(&system_path))?, &system_path)?;
            let system = system
                .parse::<CodeSystem>()
                .map_err(|_| CliError::config(&system_path, "valid systems are icd10, icd9, opcs4"))?;
            let code_path = join(&p, "code");
            let code = as_str(node.get("code")?.ok_or_else(|| missing(&code_path))?, &code_path)?;
            Ok(CodeEntry { system, code })
        })
        .collect()
}

/// Parses the data configuration. Relative paths are taken from the
/// configuration file's directory.
pub fn parse_data_config(text: &str, base: &Path) -> Result<DataConfig> {
    let root: Value = serde_yaml::from_str(text).map_err(|e| CliError::config("", format!("invalid YAML: {e}")))?;
    let top = Node { value: &root, path: "" };
    top.only_keys(&["modalities", "cohort", "endpoint", "events_path"])?;

    let mods = top.get("modalities")?.ok_or_else(|| missing("modalities"))?;
    let mods = as_seq(mods, "modalities")?;
    if mods.is_empty() {
        return Err(CliError::config("modalities", "at least one modality is required"));
    }
    let mut modalities = Vec::new();
    for (i, m) in mods.iter().enumerate() {
        let p = format!("modalities[{i}]");
        let node = Node { value: m, path: &p };
        node.only_keys(&["name", "path", "id_column", "features", "rank", "variance_fraction"])?;
        let field = |k: &str| -> Result<Option<(&Value, String)>> { Ok(node.get(k)?.map(|v| (v, join(&p, k)))) };
        let req = |k: &str| field(k)?.ok_or_else(|| missing(&join(&p, k)));
        let (v, kp) = req("name")?;
        let name = as_str(v, &kp)?;
        let (v, kp) = req("path")?;
        let path = resolve(base, &as_str(v, &kp)?);
        let id_column = match field("id_column")? {
            Some((v, kp)) => as_str(v, &kp)?,
            None => "sample_id".to_string(),
        };
        let features = field("features")?.map(|(v, kp)| as_strings(v, &kp)).transpose()?;
        let rank = field("rank")?.map(|(v, kp)| as_usize(v, &kp)).transpose()?;
        let variance_fraction = field("variance_fraction")?.map(|(v, kp)| as_f64(v, &kp)).transpose()?;
        if rank.is_some() && variance_fraction.is_some() {
            return Err(CliError::config(&p, "rank and variance_fraction are mutually exclusive"));
        }
        if modalities.iter().any(|m: &ModalityConfig| m.name == name) {
            return Err(CliError::config(join(&p, "name"), format!("duplicate modality `{name}`")));
        }
        modalities.push(ModalityConfig {
            name,
            path,
            id_column,
            features,
            rank,
            variance_fraction,
        });
    }

    let cohort_v = top.get("cohort")?.ok_or_else(|| missing("cohort"))?;
    let cohort = Node {
        value: cohort_v,
        path: "cohort",
    };
    cohort.only_keys(&["path", "file", "id_column", "baseline_column", "censor_column"])?;
    let opt_str = |k: &str| -> Result<Option<String>> {
        cohort.get(k)?.map(|v| as_str(v, &join("cohort", k))).transpose()
    };
    let defaults = CohortColumns::default();
    let cohort = CohortConfig {
        path: resolve(base, &opt_str("path")?.unwrap_or_else(|| ".".into())),
        file: opt_str("file")?.ok_or_else(|| missing("cohort.file"))?,
        columns: CohortColumns {
            id: opt_str("id_column")?.unwrap_or(defaults.id),
            baseline: opt_str("baseline_column")?.unwrap_or(defaults.baseline),
            censor: opt_str("censor_column")?.unwrap_or(defaults.censor),
        },
    };

    let ep_v = top.get("endpoint")?.ok_or_else(|| missing("endpoint"))?;
    let ep = Node {
        value: ep_v,
        path: "endpoint",
    };
    ep.only_keys(&["name", "event_codes", "exclusion_codes"])?;
    let endpoint = EndpointConfig {
        name: as_str(ep.get("name")?.ok_or_else(|| missing("endpoint.name"))?, "endpoint.name")?,
        event_codes: code_list(ep.get("event_codes")?, "endpoint.event_codes")?,
        exclusion_codes: code_list(ep.get("exclusion_codes")?, "endpoint.exclusion_codes")?,
    };
    if endpoint.event_codes.is_empty() {
        return Err(CliError::config("endpoint.event_codes", "at least one event code is required"));
    }
    endpoint
        .definition()
        .map_err(|e| CliError::config("endpoint", e.to_string()))?;

    let events = top.get("events_path")?.ok_or_else(|| missing("events_path"))?;
    let events_path = resolve(base, &as_str(events, "events_path")?);
    Ok(DataConfig {
        modalities,
        cohort,
        endpoint,
        events_path,
    })
}

/// The single entry with `use: true` under `section`, with its params node.
fn chosen<'a>(section: Node<'a>, keys: &[&str]) -> Result<(&'a str, Option<&'a Value>)> {
    let mut found = Vec::new();
    for key in section.keys()? {
        if !keys.contains(&key) {
            return Err(CliError::config(
                join(section.path, key),
                format!("unknown key; valid keys are {}", keys.join(", ")),
            ));
        }
        let p = join(section.path, key);
        let entry = section.mapping()?.get(key).expect("key listed");
        let node = Node { value: entry, path: &p };
        node.only_keys(&["use", "params"])?;
        let used = match node.get("use")? {
            Some(v) => as_bool(v, &join(&p, "use"))?,
            None => false,
        };
        if used {
            let params = entry.as_mapping().and_then(|m| m.get("params")).filter(|v| !v.is_null());
            found.push((key, params));
        }
    }
    match found.len() {
        1 => Ok(found[0]),
        0 => Err(section.err(format!("exactly one of {} must have use: true", keys.join(", ")))),
        _ => Err(section.err(format!(
            "exactly one entry may have use: true, found {}",
            found.iter().map(|f| f.0).collect::<Vec<_>>().join(", ")
        ))),
    }
}

fn integration_params(method: IntegrationMethod, params: Option<&Value>, path: &str) -> Result<IntegrationParams> {
    let mut out = IntegrationParams::default();
    let Some(v) = params else {
        return Ok(out);
    };
    let node = Node { value: v, path };
    let allowed: &[&str] = match method {
        IntegrationMethod::Early | IntegrationMethod::EarlyPca => &[],
        IntegrationMethod::Ajive => &["resamples", "percentile"],
        IntegrationMethod::Gfa => &["max_factors", "prune_fraction", "tolerance", "max_iter"],
    };
    node.only_keys(allowed)?;
    for key in node.keys()? {
        let kp = join(path, key);
        let v = node.get(key)?.ok_or_else(|| missing(&kp))?;
        match key {
            "resamples" => out.resamples = as_usize(v, &kp)?,
            "percentile" => out.percentile = as_f64(v, &kp)?,
            "max_factors" => out.max_factors = as_usize(v, &kp)?,
            "prune_fraction" => out.prune_fraction = as_f64(v, &kp)?,
            "tolerance" => out.tolerance = as_f64(v, &kp)?,
            "max_iter" => out.max_iter = as_usize(v, &kp)?,
            _ => unreachable!("checked by only_keys"),
        }
    }
    Ok(out)
}

fn prediction_params(algorithm: Algorithm, params: Option<&Value>, path: &str) -> Result<PredictionParams> {
    let mut out = PredictionParams {
        alpha_grid: Vec::new(),
        l1_ratio: match algorithm {
            Algorithm::Coxph => 0.5,
            _ => 1.0,
        },
        k: None,
        eps: None,
        min_pts: None,
    };
    let empty = Value::Mapping(Default::default());
    let node = Node {
        value: params.unwrap_or(&empty),
        path,
    };
    node.only_keys(algorithm.param_keys())?;
    let get = |k: &str| -> Result<Option<(&Value, String)>> { Ok(node.get(k)?.map(|v| (v, join(path, k)))) };
    match algorithm {
        Algorithm::Logregrssm | Algorithm::Coxph => {
            let alpha = get("alpha")?.map(|(v, kp)| as_f64(v, &kp)).transpose()?;
            let grid = get("alpha_grid")?
                .map(|(v, kp)| {
                    as_seq(v, &kp)?
                        .iter()
                        .enumerate()
                        .map(|(i, x)| as_f64(x, &format!("{kp}[{i}]")))
                        .collect::<Result<Vec<f64>>>()
                })
                .transpose()?;
            out.alpha_grid = match (alpha, grid) {
                (Some(_), Some(_)) => {
                    return Err(CliError::config(path, "give alpha or alpha_grid, not both"));
                }
                (Some(a), None) => vec![a],
                (None, Some(g)) if !g.is_empty() => g,
                (None, Some(_)) => return Err(CliError::config(join(path, "alpha_grid"), "grid is empty")),
                (None, None) => return Err(missing(&join(path, "alpha"))),
            };
            if let Some(a) = out.alpha_grid.iter().find(|a| **a < 0.0) {
                return Err(CliError::config(join(path, "alpha"), format!("alpha must be nonnegative, got {a}")));
            }
            if let Some((v, kp)) = get("l1_ratio")? {
                out.l1_ratio = as_f64(v, &kp)?;
                if !(0.0..=1.0).contains(&out.l1_ratio) {
                    return Err(CliError::config(kp, "l1_ratio must lie in [0, 1]"));
                }
            }
        }
        Algorithm::GaussianNb => {}
        Algorithm::Kmeans => {
            let (v, kp) = get("k")?.ok_or_else(|| missing(&join(path, "k")))?;
            let k = as_usize(v, &kp)?;
            if k == 0 {
                return Err(CliError::config(kp, "k must be positive"));
            }
            out.k = Some(k);
        }
        Algorithm::Dbscan => {
            let (v, kp) = get("eps")?.ok_or_else(|| missing(&join(path, "eps")))?;
            let eps = as_f64(v, &kp)?;
            if eps <= 0.0 {
                return Err(CliError::config(kp, "eps must be positive"));
            }
            let (v, kp) = get("min_pts")?.ok_or_else(|| missing(&join(path, "min_pts")))?;
            out.eps = Some(eps);
            out.min_pts = Some(as_usize(v, &kp)?);
        }
    }
    Ok(out)
}

/// Parses the model configuration, with command-line overrides applied
/// before defaults and validation.
pub fn parse_model_config(text: &str, overrides: &Overrides) -> Result<ModelConfig> {
    let root: Value = serde_yaml::from_str(text).map_err(|e| CliError::config("", format!("invalid YAML: {e}")))?;
    let top = Node { value: &root, path: "" };
    top.only_keys(&[
        "integration",
        "prediction",
        "task",
        "years_risk_classification",
        "latent_impute",
        "test_size",
        "n_folds",
        "seed",
        "end_study_date",
        "cohort_cov",
        "out_path",
        "compare_single_views",
    ])?;

    let integ = top.get("integration")?.ok_or_else(|| missing("integration"))?;
    let (key, params) = chosen(
        Node {
            value: integ,
            path: "integration",
        },
        &IntegrationMethod::KEYS,
    )?;
    let integration = IntegrationMethod::from_key(key).expect("validated key");
    let integration_params = integration_params(integration, params, &format!("integration.{key}.params"))?;

    let pred = top.get("prediction")?.ok_or_else(|| missing("prediction"))?;
    let (key, params) = chosen(
        Node {
            value: pred,
            path: "prediction",
        },
        &Algorithm::KEYS,
    )?;
    let prediction = Algorithm::from_key(key).expect("validated key");
    let prediction_params = prediction_params(prediction, params, &format!("prediction.{key}.params"))?;

    let task = match top.get("task")? {
        Some(v) => {
            let t = as_str(v, "task")?;
            let task = match t.as_str() {
                "classification" => Task::Classification,
                "survival" => Task::Survival,
                "clustering" => Task::Clustering,
                _ => return Err(CliError::config("task", "valid tasks are classification, survival, clustering")),
            };
            if task != prediction.task() {
                return Err(CliError::config(
                    "task",
                    format!("`{}` is a {} algorithm, not {task}", prediction.key(), prediction.task()),
                ));
            }
            task
        }
        None => prediction.task(),
    };

    let years = top
        .get("years_risk_classification")?
        .map(|v| as_f64(v, "years_risk_classification"))
        .transpose()?
        .unwrap_or(DEFAULT_HORIZON_YEARS);
    if years <= 0.0 {
        return Err(CliError::config("years_risk_classification", "horizon must be positive"));
    }
    let latent_impute = match overrides.latent_impute {
        Some(b) => b,
        None => top.get("latent_impute")?.map(|v| as_bool(v, "latent_impute")).transpose()?.unwrap_or(false),
    };
    if latent_impute && integration != IntegrationMethod::Gfa {
        return Err(CliError::config(
            "latent_impute",
            format!("latent imputation needs integration gfa, not {}", integration.key()),
        ));
    }
    let test_size = match overrides.test_size {
        Some(t) => t,
        None => top.get("test_size")?.map(|v| as_f64(v, "test_size")).transpose()?.unwrap_or(DEFAULT_TEST_SIZE),
    };
    if !(test_size > 0.0 && test_size < 1.0) {
        return Err(CliError::config("test_size", format!("must lie in (0, 1), got {test_size}")));
    }
    let n_folds = match overrides.n_folds {
        Some(k) => k,
        None => top.get("n_folds")?.map(|v| as_usize(v, "n_folds")).transpose()?.unwrap_or(DEFAULT_N_FOLDS),
    };
    if n_folds < 2 {
        return Err(CliError::config("n_folds", "at least 2 folds are required"));
    }
    let seed = match overrides.seed {
        Some(s) => s,
        None => top
            .get("seed")?
            .map(|v| v.as_u64().ok_or_else(|| CliError::config("seed", "expected a nonnegative integer")))
            .transpose()?
            .unwrap_or(0),
    };
    let end_study_date = match overrides.end_study_date {
        Some(d) => Some(d),
        None => top.get("end_study_date")?.map(|v| as_date(v, "end_study_date")).transpose()?,
    };
    let cohort_cov = match &overrides.cohort_cov {
        Some(c) => c.clone(),
        None => top.get("cohort_cov")?.map(|v| as_strings(v, "cohort_cov")).transpose()?.unwrap_or_default(),
    };
    let out_path = match &overrides.out_path {
        Some(p) => p.clone(),
        None => PathBuf::from(as_str(top.get("out_path")?.ok_or_else(|| missing("out_path"))?, "out_path")?),
    };
    let compare_single_views = top
        .get("compare_single_views")?
        .map(|v| as_bool(v, "compare_single_views"))
        .transpose()?
        .unwrap_or(false);
    if compare_single_views && task == Task::Clustering {
        return Err(CliError::config("compare_single_views", "comparisons need a supervised task"));
    }
    if compare_single_views && latent_impute {
        return Err(CliError::config(
            "compare_single_views",
            "single-view baselines need complete views; disable latent_impute",
        ));
    }
    Ok(ModelConfig {
        integration,
        integration_params,
        prediction,
        prediction_params,
        task,
        years_risk_classification: years,
        latent_impute,
        test_size,
        n_folds,
        seed,
        end_study_date,
        cohort_cov,
        out_path,
        compare_single_views,
    })
}

/// Reads both files, applies overrides and checks that every referenced
/// input file exists.
pub fn parse_configs(data_path: &Path, model_path: &Path, overrides: &Overrides) -> Result<(DataConfig, ModelConfig)> {
    let data_text = read_text(data_path, "config_data")?;
    let model_text = read_text(model_path, "config_model")?;
    let base = data_path.parent().unwrap_or(Path::new("."));
    let mut data = parse_data_config(&data_text, base)?;
    if let Some(p) = &overrides.cohort_path {
        data.cohort.path = p.clone();
    }
    if let Some(f) = &overrides.cohort_file {
        data.cohort.file = f.clone();
    }
    let model = parse_model_config(&model_text, overrides)?;
    check_files(&data)?;
    model.integration_config(&data.modalities)?;
    Ok((data, model))
}

fn check_files(data: &DataConfig) -> Result<()> {
    for (i, m) in data.modalities.iter().enumerate() {
        if !m.path.is_file() {
            return Err(CliError::config(
                format!("modalities[{i}].path"),
                format!("{} does not exist", m.path.display()),
            ));
        }
    }
    if !data.cohort.file_path().is_file() {
        return Err(CliError::config(
            "cohort.file",
            format!("{} does not exist", data.cohort.file_path().display()),
        ));
    }
    if !data.events_path.is_file() {
        return Err(CliError::config(
            "events_path",
            format!("{} does not exist", data.events_path.display()),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MODEL: &str = "
integration:
  ajive:
    use: true
  gfa:
    use: false
prediction:
  logregrssm:
    use: true
    params:
      alpha: 1.0
out_path: results
";

    fn key_of(e: CliError) -> String {
        match e {
            CliError::Config { key, .. } => key,
            other => panic!("not a config error: {other}"),
        }
    }

    #[test]
    fn minimal_model_config_gets_defaults() {
        let m = parse_model_config(MODEL, &Overrides::default()).unwrap();
        assert_eq!(m.integration, IntegrationMethod::Ajive);
        assert_eq!(m.prediction, Algorithm::Logregrssm);
        assert_eq!(m.prediction_params.alpha_grid, vec![1.0]);
        assert_eq!(m.task, Task::Classification);
        assert_eq!((m.test_size, m.n_folds, m.seed), (0.2, 10, 0));
        assert_eq!(m.years_risk_classification, 5.0);
        assert!(!m.latent_impute);
    }

    #[test]
    fn missing_out_path_names_key() {
        let text = MODEL.replace("out_path: results\n", "");
        assert_eq!(key_of(parse_model_config(&text, &Overrides::default()).unwrap_err()), "out_path");
        let o = Overrides {
            out_path: Some("x".into()),
            ..Overrides::default()
        };
        assert!(parse_model_config(&text, &o).is_ok());
    }

    #[test]
    fn two_methods_in_use_rejected() {
        let text = MODEL.replace("    use: false", "    use: true");
        assert_eq!(key_of(parse_model_config(&text, &Overrides::default()).unwrap_err()), "integration");
    }

    #[test]
    fn unknown_algorithm_lists_valid_keys() {
        let text = MODEL.replace("logregrssm", "svm");
        let e = parse_model_config(&text, &Overrides::default()).unwrap_err();
        assert!(e.to_string().contains("logregrssm, coxph, gaussian_nb, kmeans, dbscan"));
        assert_eq!(key_of(e), "prediction.svm");
    }

    #[test]
    fn latent_impute_requires_gfa() {
        let text = format!("{MODEL}latent_impute: true\n");
        assert_eq!(key_of(parse_model_config(&text, &Overrides::default()).unwrap_err()), "latent_impute");
        let text = text.replace("ajive:\n    use: true", "ajive:\n    use: false").replace("gfa:\n    use: false", "gfa:\n    use: true");
        assert!(parse_model_config(&text, &Overrides::default()).unwrap().latent_impute);
    }

    #[test]
    fn penalized_model_needs_alpha() {
        let text = MODEL.replace("    params:\n      alpha: 1.0\n", "");
        assert_eq!(
            key_of(parse_model_config(&text, &Overrides::default()).unwrap_err()),
            "prediction.logregrssm.params.alpha"
        );
    }

    #[test]
    fn data_config_resolves_paths() {
        let text = "
modalities:
  - name: a
    path: a.csv
    rank: 2
cohort:
  file: cohort.csv
endpoint:
  name: af
  event_codes:
    - {system: icd10, code: I48}
events_path: /abs/events.csv
";
        let d = parse_data_config(text, Path::new("/data")).unwrap();
        assert_eq!(d.modalities[0].path, PathBuf::from("/data/a.csv"));
        assert_eq!(d.modalities[0].id_column, "sample_id");
        assert_eq!(d.cohort.file_path(), PathBuf::from("/data/./cohort.csv"));
        assert_eq!(d.events_path, PathBuf::from("/abs/events.csv"));
        let bad = text.replace("icd10", "icd11");
        assert_eq!(key_of(parse_data_config(&bad, Path::new("/")).unwrap_err()), "endpoint.event_codes[0].system");
    }

    #[test]
    fn echoed_configs_round_trip() {
        let m = parse_model_config(MODEL, &Overrides::default()).unwrap();
        let back: ModelConfig = serde_json::from_value(serde_json::to_value(&m).unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
