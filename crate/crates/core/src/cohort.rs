//! Endpoint derivation from coded event records, baseline exclusion,
//! classification labels and survival outcomes.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DAYS_PER_YEAR: f64 = 365.25;
/// Survival time assigned to zero-length follow-up, in years.
pub const HALF_DAY_YEARS: f64 = 0.5 / DAYS_PER_YEAR;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CodeSystem {
    Icd10,
    Icd9,
    Opcs4,
}

impl FromStr for CodeSystem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "icd10" => Ok(CodeSystem::Icd10),
            "icd9" => Ok(CodeSystem::Icd9),
            "opcs4" => Ok(CodeSystem::Opcs4),
            other => Err(Error::Config(format!("unknown code system `{other}`"))),
        }
    }
}

impl fmt::Display for CodeSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CodeSystem::Icd10 => "icd10",
            CodeSystem::Icd9 => "icd9",
            CodeSystem::Opcs4 => "opcs4",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub subject_id: String,
    pub code_system: CodeSystem,
    pub code: String,
    pub date: NaiveDate,
}

/// Uppercase, without dots or whitespace.
pub fn normalize_code(code: &str) -> String {
    code.chars()
        .filter(|c| *c != '.' && !c.is_whitespace())
        .map(|c| c.to_ascii_uppercase())
        .collect()
}

/// Expands a code pattern into normalized prefixes. A range such as
/// `K40.1-4` or `I20-I25` enumerates its numeric tail; anything else is a
/// single prefix.
pub fn expand_code_pattern(pattern: &str) -> Result<Vec<String>> {
    let Some((left, right)) = pattern.split_once('-') else {
        let code = normalize_code(pattern);
        if code.is_empty() {
            return Err(Error::Config("empty code prefix".into()));
        }
        return Ok(vec![code]);
    };
    let bad = || Error::Config(format!("malformed code range `{pattern}`"));
    let left = normalize_code(left);
    let mut right = normalize_code(right);
    if left.is_empty() || right.is_empty() || right.len() > left.len() {
        return Err(bad());
    }
    if right.len() < left.len() {
        right = format!("{}{}", &left[..left.len() - right.len()], right);
    }
    let common = left
        .bytes()
        .zip(right.bytes())
        .take_while(|(a, b)| a == b)
        .count();
    if common == left.len() {
        return Ok(vec![left]);
    }
    let (lt, rt) = (&left[common..], &right[common..]);
    if !lt.bytes().all(|b| b.is_ascii_digit()) || !rt.bytes().all(|b| b.is_ascii_digit()) {
        return Err(bad());
    }
    let (lo, hi): (u64, u64) = (lt.parse().map_err(|_| bad())?, rt.parse().map_err(|_| bad())?);
    if lo > hi {
        return Err(bad());
    }
    let width = lt.len();
    Ok((lo..=hi)
        .map(|v| format!("{}{:0width$}", &left[..common], v))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndpointDefinition {
    pub name: String,
    /// (system, normalized prefix) pairs after range expansion.
    pub event_codes: Vec<(CodeSystem, String)>,
    pub exclusion_codes: Vec<(CodeSystem, String)>,
}

impl EndpointDefinition {
    /// Patterns may contain dots, mixed case and ranges.
    pub fn new(
        name: impl Into<String>,
        event_codes: &[(CodeSystem, &str)],
        exclusion_codes: &[(CodeSystem, &str)],
    ) -> Result<Self> {
        let expand = |codes: &[(CodeSystem, &str)]| -> Result<Vec<(CodeSystem, String)>> {
            let mut out = Vec::new();
            for (system, pattern) in codes {
                for p in expand_code_pattern(pattern)? {
                    out.push((*system, p));
                }
            }
            Ok(out)
        };
        let def = Self {
            name: name.into(),
            event_codes: expand(event_codes)?,
            exclusion_codes: expand(exclusion_codes)?,
        };
        if def.event_codes.is_empty() {
            return Err(Error::Config(format!("endpoint `{}` has no event codes", def.name)));
        }
        Ok(def)
    }

    fn matches(codes: &[(CodeSystem, String)], record: &EventRecord) -> bool {
        let code = normalize_code(&record.code);
        codes
            .iter()
            .any(|(system, prefix)| *system == record.code_system && code.starts_with(prefix.as_str()))
    }

    pub fn is_event(&self, record: &EventRecord) -> bool {
        Self::matches(&self.event_codes, record)
    }

    pub fn is_exclusion(&self, record: &EventRecord) -> bool {
        Self::matches(&self.exclusion_codes, record)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndpointDates {
    pub first_event: Option<NaiveDate>,
    pub first_exclusion: Option<NaiveDate>,
}

/// Earliest matching event and exclusion date for every subject that has
/// any record.
pub fn derive_endpoint(records: &[EventRecord], definition: &EndpointDefinition) -> BTreeMap<String, EndpointDates> {
    let mut out: BTreeMap<String, EndpointDates> = BTreeMap::new();
    let earliest = |slot: &mut Option<NaiveDate>, date: NaiveDate| {
        if slot.is_none_or(|d| date < d) {
            *slot = Some(date);
        }
    };
    for r in records {
        let entry = out.entry(r.subject_id.clone()).or_default();
        if definition.is_event(r) {
            earliest(&mut entry.first_event, r.date);
        }
        if definition.is_exclusion(r) {
            earliest(&mut entry.first_exclusion, r.date);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSubject {
    pub subject_id: String,
    pub baseline_date: NaiveDate,
    pub endpoint_date: Option<NaiveDate>,
    /// Earlier of the subject's own loss to follow-up and the study end.
    pub censor_date: NaiveDate,
    pub covariates: Vec<f64>,
    pub label: Option<u8>,
    pub time_years: Option<f64>,
    pub event: Option<bool>,
}

impl CohortSubject {
    /// The endpoint if it is observed before censoring.
    pub fn observed_endpoint(&self) -> Option<NaiveDate> {
        self.endpoint_date.filter(|&e| e <= self.censor_date)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortTable {
    pub covariate_names: Vec<String>,
    pub subjects: Vec<CohortSubject>,
}

impl CohortTable {
    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    pub fn subject_ids(&self) -> Vec<String> {
        self.subjects.iter().map(|s| s.subject_id.clone()).collect()
    }

    /// Sets each subject's endpoint to its first event date.
    pub fn attach_endpoints(&mut self, dates: &BTreeMap<String, EndpointDates>) {
        for s in &mut self.subjects {
            s.endpoint_date = dates.get(&s.subject_id).and_then(|d| d.first_event);
        }
    }

    pub fn retain_ids(&self, ids: &HashSet<&str>) -> Self {
        Self {
            covariate_names: self.covariate_names.clone(),
            subjects: self
                .subjects
                .iter()
                .filter(|s| ids.contains(s.subject_id.as_str()))
                .cloned()
                .collect(),
        }
    }
}

fn days_between(from: NaiveDate, to: NaiveDate) -> i64 {
    (to - from).num_days()
}

/// Removes subjects with an exclusion event or an endpoint on or before
/// their baseline.
pub fn apply_baseline_exclusion(cohort: &CohortTable, exclusions: &BTreeMap<String, EndpointDates>) -> CohortTable {
    let subjects = cohort
        .subjects
        .iter()
        .filter(|s| {
            let excluded = exclusions
                .get(&s.subject_id)
                .and_then(|d| d.first_exclusion)
                .is_some_and(|d| d <= s.baseline_date);
            let prevalent = s.endpoint_date.is_some_and(|d| d <= s.baseline_date);
            !excluded && !prevalent
        })
        .cloned()
        .collect();
    CohortTable {
        covariate_names: cohort.covariate_names.clone(),
        subjects,
    }
}

/// Label 1 for an endpoint in `(baseline, baseline + horizon]`, 0 for
/// follow-up reaching the horizon without one; other subjects are dropped.
pub fn label_classification(cohort: &CohortTable, horizon_years: f64) -> Result<CohortTable> {
    if !(horizon_years > 0.0) || !horizon_years.is_finite() {
        return Err(Error::Config(format!("horizon must be positive, got {horizon_years}")));
    }
    let horizon_days = horizon_years * DAYS_PER_YEAR;
    let subjects = cohort
        .subjects
        .iter()
        .filter_map(|s| {
            let follow_up = days_between(s.baseline_date, s.censor_date) as f64;
            let label = match s.observed_endpoint() {
                Some(e) => {
                    let t = days_between(s.baseline_date, e) as f64;
                    if t > 0.0 && t <= horizon_days {
                        Some(1)
                    } else if t > horizon_days {
                        Some(0)
                    } else {
                        None
                    }
                }
                None if follow_up >= horizon_days => Some(0),
                None => None,
            };
            label.map(|label| CohortSubject {
                label: Some(label),
                ..s.clone()
            })
        })
        .collect();
    Ok(CohortTable {
        covariate_names: cohort.covariate_names.clone(),
        subjects,
    })
}

/// Time in years to the first of endpoint or censoring, and whether the
/// endpoint was observed. Zero times become half a day.
pub fn build_survival_outcome(cohort: &CohortTable) -> Result<CohortTable> {
    let mut subjects = Vec::with_capacity(cohort.len());
    for s in &cohort.subjects {
        if s.censor_date < s.baseline_date {
            return Err(Error::DateOrder {
                subject: s.subject_id.clone(),
                detail: format!("censor date {} precedes baseline {}", s.censor_date, s.baseline_date),
            });
        }
        let endpoint = s.observed_endpoint();
        if let Some(e) = endpoint.filter(|&e| e < s.baseline_date) {
            return Err(Error::DateOrder {
                subject: s.subject_id.clone(),
                detail: format!("endpoint {e} precedes baseline {}", s.baseline_date),
            });
        }
        let end = endpoint.unwrap_or(s.censor_date);
        let days = days_between(s.baseline_date, end);
        let time = if days == 0 {
            HALF_DAY_YEARS
        } else {
            days as f64 / DAYS_PER_YEAR
        };
        subjects.push(CohortSubject {
            time_years: Some(time),
            event: Some(endpoint.is_some()),
            ..s.clone()
        });
    }
    Ok(CohortTable {
        covariate_names: cohort.covariate_names.clone(),
        subjects,
    })
}

fn parse_date(source: &Path, row: usize, column: &str, value: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(value.trim(), "%Y-%m-%d").map_err(|_| Error::DataFormat {
        source_name: source.display().to_string(),
        row,
        column: column.to_string(),
        value: value.to_string(),
    })
}

fn csv_reader(path: &Path) -> Result<(csv::Reader<std::fs::File>, csv::StringRecord)> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    let headers = reader.headers().map_err(csv_err)?.clone();
    Ok((reader, headers))
}

fn column(headers: &csv::StringRecord, path: &Path, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::Schema(format!("{}: missing column `{name}`", path.display())))
}

/// Column names of a cohort file. The censor column may be absent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CohortColumns {
    pub id: String,
    pub baseline: String,
    pub censor: String,
}

impl Default for CohortColumns {
    fn default() -> Self {
        Self {
            id: "subject_id".into(),
            baseline: "baseline_date".into(),
            censor: "censor_date".into(),
        }
    }
}

/// Reads an id, a baseline date, an optional censor date and numeric
/// covariates (every other column). The censor date is capped at
/// `end_study_date`; an empty censor cell means follow-up until the study end.
pub fn load_cohort_csv(path: &Path, columns: &CohortColumns, end_study_date: Option<NaiveDate>) -> Result<CohortTable> {
    let (mut reader, headers) = csv_reader(path)?;
    let id_col = column(&headers, path, &columns.id)?;
    let base_col = column(&headers, path, &columns.baseline)?;
    let censor_col = headers.iter().position(|h| h.trim() == columns.censor);
    let cov_cols: Vec<usize> = (0..headers.len())
        .filter(|&i| i != id_col && i != base_col && Some(i) != censor_col)
        .collect();
    let covariate_names = cov_cols.iter().map(|&i| headers[i].trim().to_string()).collect();
    let mut seen = HashSet::new();
    let mut subjects = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        let line = record.position().map_or(row + 2, |p| p.line() as usize);
        let id = record[id_col].trim().to_string();
        if id.is_empty() || !seen.insert(id.clone()) {
            return Err(Error::DuplicateId {
                id,
                source_name: path.display().to_string(),
            });
        }
        let baseline_date = parse_date(path, line, &columns.baseline, &record[base_col])?;
        let own = match censor_col.map(|c| record[c].trim()) {
            Some(v) if !v.is_empty() => Some(parse_date(path, line, &columns.censor, v)?),
            _ => None,
        };
        let censor_date = match (own, end_study_date) {
            (Some(a), Some(b)) => a.min(b),
            (Some(a), None) => a,
            (None, Some(b)) => b,
            (None, None) => {
                return Err(Error::Config(format!(
                    "subject `{id}` has no censor date and no study end date is configured"
                )))
            }
        };
        let covariates = cov_cols
            .iter()
            .map(|&c| {
                record[c]
                    .trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::DataFormat {
                        source_name: path.display().to_string(),
                        row: line,
                        column: headers[c].trim().to_string(),
                        value: record[c].to_string(),
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        subjects.push(CohortSubject {
            subject_id: id,
            baseline_date,
            endpoint_date: None,
            censor_date,
            covariates,
            label: None,
            time_years: None,
            event: None,
        });
    }
    if subjects.is_empty() {
        return Err(Error::EmptyCohort(path.display().to_string()));
    }
    Ok(CohortTable {
        covariate_names,
        subjects,
    })
}

/// Reads `subject_id, code_system, code, date`.
pub fn load_events_csv(path: &Path) -> Result<Vec<EventRecord>> {
    let (mut reader, headers) = csv_reader(path)?;
    let cols = ["subject_id", "code_system", "code", "date"]
        .iter()
        .map(|n| column(&headers, path, n))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        let line = record.position().map_or(row + 2, |p| p.line() as usize);
        let bad = |column: &str, value: &str| Error::DataFormat {
            source_name: path.display().to_string(),
            row: line,
            column: column.to_string(),
            value: value.to_string(),
        };
        let code = record[cols[2]].trim();
        if code.is_empty() {
            return Err(bad("code", code));
        }
        let system = record[cols[1]]
            .parse::<CodeSystem>()
            .map_err(|_| bad("code_system", &record[cols[1]]))?;
        out.push(EventRecord {
            subject_id: record[cols[0]].trim().to_string(),
            code_system: system,
            code: code.to_string(),
            date: parse_date(path, line, "date", &record[cols[3]])?,
        });
    }
    Ok(out)
}
