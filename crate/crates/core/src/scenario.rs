//! Scenario files: a problem, optional run settings and optional reference rows.
//!
//! Log-normal marginals may be given in decibels (`mu_db`, `sigma_db`) and the ratio
//! noise term as `eta_db`. Power quantities use `10 log10` by default, so
//! `mu = mu_db * ln(10) / 10`; the `amplitude20` convention divides by 20 instead.
//! The noise term always converts as a power, `eta = 10^(eta_db / 10)`.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::dist::DistributionSpec;
use crate::error::{Error, Result};
use crate::model::{Direction, ImportanceSpec, ProblemKind, ProblemSpec};
use crate::sched::LevelMethod;
use crate::stats::Method;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DbConvention {
    #[default]
    Power10,
    Amplitude20,
}

impl DbConvention {
    /// Natural-log scale parameter for a log-normal given in decibels.
    pub fn log_scale(self, db: f64) -> f64 {
        let div = match self {
            DbConvention::Power10 => 10.0,
            DbConvention::Amplitude20 => 20.0,
        };
        db * std::f64::consts::LN_10 / div
    }

    pub fn other(self) -> Self {
        match self {
            DbConvention::Power10 => DbConvention::Amplitude20,
            DbConvention::Amplitude20 => DbConvention::Power10,
        }
    }
}

/// Power ratio for a value in decibels.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Run settings stored alongside a problem. Unset fields fall back to the caller's defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_bar: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<LevelMethod>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub naive_m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub is_m: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub methods: Vec<Method>,
}

/// A published figure to print next to our own result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Reference {
    pub label: String,
    pub mean: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub re_percent: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wnrv: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Row {
    pub gamma: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub reference: Vec<Reference>,
}

impl Row {
    pub fn reference(&self, label: &str) -> Option<&Reference> {
        self.reference.iter().find(|r| r.label == label)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    #[serde(flatten)]
    pub problem: ProblemSpec,
    #[serde(skip_serializing_if = "is_default_settings")]
    pub settings: Settings,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub rows: Vec<Row>,
}

fn is_default_settings(s: &Settings) -> bool {
    *s == Settings::default()
}

impl Scenario {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Problems for every row, or the top-level threshold when there are no rows.
    pub fn row_problems(&self) -> Result<Vec<(Option<&Row>, ProblemSpec)>> {
        if self.rows.is_empty() {
            return Ok(vec![(None, self.problem.clone())]);
        }
        self.rows.iter().map(|r| Ok((Some(r), self.problem.with_gamma(r.gamma)?))).collect()
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    #[serde(default)]
    name: Option<String>,
    #[serde(default)]
    title: Option<String>,
    marginals: Vec<Value>,
    directions: Vec<Direction>,
    importance: Value,
    gamma: f64,
    kind: ProblemKind,
    #[serde(default)]
    db_convention: Option<DbConvention>,
    #[serde(default)]
    settings: Settings,
    #[serde(default)]
    rows: Vec<Row>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DbLogNormal {
    mu_db: f64,
    sigma_db: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DbRatio {
    #[allow(dead_code)]
    kind: String,
    eta_db: f64,
}

fn join_path(prefix: &str, inner: &str) -> String {
    match inner {
        "" | "." => prefix.to_string(),
        s if s.starts_with('[') => format!("{prefix}{s}"),
        s => format!("{prefix}.{s}"),
    }
}

fn scenario_err(path: impl Into<String>, message: impl std::fmt::Display) -> Error {
    Error::Scenario { path: path.into(), message: message.to_string() }
}

fn from_value<T: DeserializeOwned>(value: &Value, prefix: &str) -> Result<T> {
    serde_path_to_error::deserialize(value.clone())
        .map_err(|e| scenario_err(join_path(prefix, &e.path().to_string()), e.inner()))
}

fn has_key(value: &Value, outer: Option<&str>, key: &str) -> bool {
    let obj = match outer {
        Some(o) => value.get(o),
        None => Some(value),
    };
    obj.and_then(Value::as_object).is_some_and(|m| m.contains_key(key))
}

fn parse_marginal(value: &Value, conv: DbConvention, prefix: &str) -> Result<DistributionSpec> {
    let is_lognormal = value.get("kind").and_then(Value::as_str) == Some("lognormal");
    if is_lognormal && (has_key(value, Some("params"), "mu_db") || has_key(value, Some("params"), "sigma_db")) {
        let params_path = format!("{prefix}.params");
        let raw: DbLogNormal = from_value(&value["params"], &params_path)?;
        return DistributionSpec::lognormal(conv.log_scale(raw.mu_db), conv.log_scale(raw.sigma_db))
            .map_err(|e| scenario_err(params_path, e));
    }
    from_value(value, prefix)
}

fn parse_importance(value: &Value) -> Result<ImportanceSpec> {
    let is_ratio = value.get("kind").and_then(Value::as_str) == Some("ratio");
    if is_ratio && has_key(value, None, "eta_db") {
        let raw: DbRatio = from_value(value, "importance")?;
        return Ok(ImportanceSpec::Ratio { eta: db_to_linear(raw.eta_db) });
    }
    from_value(value, "importance")
}

/// Parses scenario JSON; `convention` overrides the file's `db_convention`.
pub fn parse_scenario_with(text: &str, convention: Option<DbConvention>) -> Result<Scenario> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let raw: RawScenario =
        serde_path_to_error::deserialize(de).map_err(|e| scenario_err(e.path().to_string(), e.inner()))?;
    let conv = convention.or(raw.db_convention).unwrap_or_default();
    let marginals = raw
        .marginals
        .iter()
        .enumerate()
        .map(|(i, v)| parse_marginal(v, conv, &format!("marginals[{i}]")))
        .collect::<Result<Vec<_>>>()?;
    let importance = parse_importance(&raw.importance)?;
    let problem = ProblemSpec::new(marginals, raw.directions, importance, raw.gamma, raw.kind)
        .map_err(|e| scenario_err(".", e))?;
    for (i, row) in raw.rows.iter().enumerate() {
        problem.with_gamma(row.gamma).map_err(|e| scenario_err(format!("rows[{i}].gamma"), e))?;
    }
    if let Some(p) = raw.settings.p_bar {
        if !(p > 0.0 && p < 1.0) {
            return Err(scenario_err("settings.p_bar", format!("must lie in (0, 1), got {p}")));
        }
    }
    Ok(Scenario { name: raw.name, title: raw.title, problem, settings: raw.settings, rows: raw.rows })
}

pub fn parse_scenario(text: &str) -> Result<Scenario> {
    parse_scenario_with(text, None)
}

pub fn load_scenario(path: &Path, convention: Option<DbConvention>) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)?;
    parse_scenario_with(&text, convention)
}

/// Built-in scenarios for the published tables, keyed `I` to `VI`.
pub const PRESET_IDS: [&str; 6] = ["I", "II", "III", "IV", "V", "VI"];

pub fn preset_source(id: &str) -> Option<&'static str> {
    Some(match id.to_ascii_uppercase().as_str() {
        "I" | "1" => include_str!("../presets/table1.json"),
        "II" | "2" => include_str!("../presets/table2.json"),
        "III" | "3" => include_str!("../presets/table3.json"),
        "IV" | "4" => include_str!("../presets/table4.json"),
        "V" | "5" => include_str!("../presets/table5.json"),
        "VI" | "6" => include_str!("../presets/table6.json"),
        _ => return None,
    })
}

pub fn preset(id: &str) -> Result<Scenario> {
    preset_with(id, None)
}

pub fn preset_with(id: &str, convention: Option<DbConvention>) -> Result<Scenario> {
    let src = preset_source(id).ok_or_else(|| {
        Error::InvalidParameter(format!("unknown table {id:?}; expected one of {}", PRESET_IDS.join(", ")))
    })?;
    parse_scenario_with(src, convention)
}
