//! The JSON report: one document per run, versioned by [`SCHEMA_VERSION`].
//!
//! Numbers are finite or `null`; every `null` number is listed in
//! `null_values` with the JSON pointer of the field and a reason code.

use serde::Serialize;
use serde_json::Value;

use crate::config::RunConfig;

pub const SCHEMA_VERSION: &str = "1.0.0";

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub seed: u64,
    pub config: RunConfig,
}

impl Provenance {
    pub fn new(config: &RunConfig) -> Self {
        Self {
            tool: "ivqr",
            version: env!("CARGO_PKG_VERSION"),
            seed: config.seed,
            config: config.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DataSummary {
    pub path: String,
    pub n: usize,
    pub rows_read: usize,
    pub dropped_rows: usize,
    pub y: String,
    pub d: Vec<String>,
    pub x: Vec<String>,
    pub z: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GridSummary {
    /// `user` or `default_2sls`.
    pub source: &'static str,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub points_per_axis: Vec<usize>,
    pub points: usize,
    pub resolution: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProfilePoint {
    pub alpha: Vec<f64>,
    pub wald: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StdErrors {
    pub alpha: Vec<Option<f64>>,
    pub beta: Vec<Option<f64>>,
    pub block_size: usize,
    pub replications: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateBlock {
    pub tau: f64,
    pub alpha_names: Vec<String>,
    pub alpha_hat: Vec<f64>,
    /// Intercept first, then the exogenous covariates.
    pub beta_names: Vec<String>,
    pub beta_hat: Vec<f64>,
    pub std_errors: Option<StdErrors>,
    pub wald_min: f64,
    pub argmin_index: usize,
    pub boundary_warning: bool,
    pub local_minima: Vec<Vec<f64>>,
    pub grid: GridSummary,
    pub invalid_points: usize,
    pub profile: Vec<ProfilePoint>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RegionBlock {
    pub tau: f64,
    pub level: f64,
    pub df: u32,
    pub threshold: f64,
    pub alpha_hat: Vec<f64>,
    pub grid: GridSummary,
    /// Interval hull of each connected component (one-dimensional grids only).
    pub intervals: Vec<[f64; 2]>,
    pub points: Vec<Vec<f64>>,
    pub grid_fraction: f64,
    pub components: usize,
    pub connected: bool,
    pub volume: f64,
    pub touches_grid_edge: bool,
    pub weak_identification: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentBlock {
    pub tau: f64,
    pub d_support: Vec<f64>,
    pub z_support: Vec<f64>,
    /// Candidate quantiles `q(d, tau)` at which the local checks are evaluated.
    pub center: Vec<f64>,
    pub region: Value,
    pub local_rank: Value,
    pub likelihood_ratio: Option<Value>,
    pub univalence: Value,
    pub scan: Value,
    pub verdict: IdentVerdict,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentVerdict {
    pub local_rank: bool,
    pub likelihood_ratio: Option<bool>,
    pub univalence: bool,
    pub all_pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationBlock {
    pub dgp: String,
    pub n: usize,
    pub seed: u64,
    pub csv: String,
    pub truth: String,
    pub columns: Vec<String>,
    pub y: String,
    pub d: Vec<String>,
    pub x: Vec<String>,
    pub z: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct McTauSummary {
    pub tau: f64,
    pub truth: Vec<f64>,
    pub replications: usize,
    pub failures: usize,
    pub mean: Vec<Option<f64>>,
    pub bias: Vec<Option<f64>>,
    pub median_bias: Vec<Option<f64>>,
    pub mc_sd: Vec<Option<f64>>,
    pub rmse: Vec<Option<f64>>,
    pub coverage: Option<f64>,
    pub median_region_volume: Option<f64>,
    pub weak_identification_share: Option<f64>,
    pub boundary_share: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct McBlock {
    pub dgp: String,
    pub n: usize,
    pub replications: usize,
    pub level: f64,
    pub summaries: Vec<McTauSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NullValue {
    pub path: String,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub schema_version: &'static str,
    pub command: &'static str,
    pub provenance: Provenance,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<DataSummary>,
    pub warnings: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub estimates: Vec<EstimateBlock>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub regions: Vec<RegionBlock>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub identification: Vec<IdentBlock>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationBlock>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub monte_carlo: Option<McBlock>,
    pub null_values: Vec<NullValue>,
}

impl Report {
    pub fn new(config: &RunConfig) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            command: config.command.name(),
            provenance: Provenance::new(config),
            data: None,
            warnings: Vec::new(),
            estimates: Vec::new(),
            regions: Vec::new(),
            identification: Vec::new(),
            simulation: None,
            monte_carlo: None,
            null_values: Vec::new(),
        }
    }

    /// Records why the number at `path` is null.
    pub fn null(&mut self, path: impl Into<String>, reason: impl Into<String>) {
        self.null_values.push(NullValue {
            path: path.into(),
            reason: reason.into(),
        });
    }

    /// Serialises the report. Any null not already explained (a non-finite
    /// number inside an embedded diagnostic) is listed as `non_finite`.
    pub fn to_json(&self) -> Value {
        let mut value = serde_json::to_value(self).expect("report serialises");
        let mut found = Vec::new();
        collect_nulls(&value, String::new(), &mut found);
        let known: std::collections::BTreeSet<&str> = self.null_values.iter().map(|n| n.path.as_str()).collect();
        let extra: Vec<NullValue> = found
            .into_iter()
            .filter(|p| !known.contains(p.as_str()))
            .map(|path| NullValue {
                path,
                reason: "non_finite".into(),
            })
            .collect();
        if !extra.is_empty() {
            let list = value["null_values"].as_array_mut().expect("null_values is an array");
            list.extend(extra.into_iter().map(|n| serde_json::to_value(n).expect("serialises")));
        }
        value
    }
}

/// JSON pointers of every null below `value`, skipping configuration echoes
/// (where null means "not set").
fn collect_nulls(value: &Value, path: String, out: &mut Vec<String>) {
    match value {
        Value::Null => out.push(path),
        Value::Array(items) => {
            for (i, v) in items.iter().enumerate() {
                collect_nulls(v, format!("{path}/{i}"), out);
            }
        }
        Value::Object(map) => {
            for (k, v) in map {
                if path.is_empty() && k == "provenance" {
                    continue;
                }
                collect_nulls(v, format!("{path}/{k}"), out);
            }
        }
        _ => {}
    }
}

/// `Some(x)` when finite.
pub fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{Command, RunConfig};
    use std::collections::BTreeMap;

    #[test]
    fn unexplained_nulls_are_listed_as_non_finite() {
        let config = RunConfig::from_layers(Command::Ci, BTreeMap::new(), BTreeMap::new()).unwrap();
        let mut report = Report::new(&config);
        report.warnings.push("w".into());
        report.monte_carlo = Some(McBlock {
            dgp: "location_scale".into(),
            n: 10,
            replications: 2,
            level: 0.95,
            summaries: vec![McTauSummary {
                tau: 0.5,
                truth: vec![f64::NAN],
                replications: 2,
                failures: 2,
                mean: vec![None],
                bias: vec![None],
                median_bias: vec![None],
                mc_sd: vec![None],
                rmse: vec![None],
                coverage: None,
                median_region_volume: None,
                weak_identification_share: None,
                boundary_share: None,
            }],
        });
        report.null("/monte_carlo/summaries/0/coverage", "no_successful_replications");
        let json = report.to_json();
        let nulls = json["null_values"].as_array().unwrap();
        let find = |p: &str| nulls.iter().find(|n| n["path"] == p).map(|n| n["reason"].as_str().unwrap().to_string());
        assert_eq!(find("/monte_carlo/summaries/0/coverage").unwrap(), "no_successful_replications");
        assert_eq!(find("/monte_carlo/summaries/0/truth/0").unwrap(), "non_finite");
        assert_eq!(find("/monte_carlo/summaries/0/rmse/0").unwrap(), "non_finite");
        // the configuration echo may hold nulls for unset options
        assert!(nulls.iter().all(|n| !n["path"].as_str().unwrap().starts_with("/provenance")));
    }
}
