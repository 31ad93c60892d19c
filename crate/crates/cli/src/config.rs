//! Run configuration: command-line flags layered over a flat `key = value`
//! file layered over built-in defaults.
//!
//! Both sources are first flattened into the same string map so that a key
//! means the same thing wherever it is set; typed parsing happens once, on
//! the merged map.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use serde::Serialize;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Point estimates and subsampling standard errors per quantile index.
    Estimate,
    /// Weak-identification-robust confidence regions.
    Ci,
    /// Identification diagnostics for a discrete treatment and instrument.
    Identify,
    /// Draw a dataset from a built-in design and write it as CSV.
    Simulate,
    /// Replicated simulate -> estimate -> region pipeline.
    Mc,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Estimate => "estimate",
            Command::Ci => "ci",
            Command::Identify => "identify",
            Command::Simulate => "simulate",
            Command::Mc => "mc",
        }
    }
}

/// Instrumental-variables quantile regression.
#[derive(Debug, Parser)]
#[command(name = "ivqr", version, about)]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// Input CSV (header row, comma separated, decimal point).
    #[arg(long)]
    pub input: Option<String>,
    /// Report JSON path; for `simulate`, the CSV path.
    #[arg(long)]
    pub output: Option<String>,
    /// Outcome column.
    #[arg(long)]
    pub y: Option<String>,
    /// Endogenous column (repeatable).
    #[arg(long)]
    pub d: Vec<String>,
    /// Exogenous covariate column (repeatable).
    #[arg(long)]
    pub x: Vec<String>,
    /// Instrument column (repeatable).
    #[arg(long)]
    pub z: Vec<String>,
    /// Quantile index (repeatable).
    #[arg(long)]
    pub tau: Vec<String>,
    /// Grid lower bound, one per endogenous column.
    #[arg(long = "grid-min", allow_hyphen_values = true)]
    pub grid_min: Vec<String>,
    #[arg(long = "grid-max", allow_hyphen_values = true)]
    pub grid_max: Vec<String>,
    #[arg(long = "grid-step")]
    pub grid_step: Vec<String>,
    /// Confidence level of robust regions.
    #[arg(long)]
    pub level: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    /// Simulation design: location_scale, demand or binary.
    #[arg(long)]
    pub dgp: Option<String>,
    /// Monte Carlo replications.
    #[arg(long)]
    pub reps: Option<String>,
    /// Simulated sample size.
    #[arg(long)]
    pub n: Option<String>,
    /// Flat `key = value` configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Design or tuning parameter, `key=value` (repeatable).
    #[arg(long)]
    pub param: Vec<String>,
    /// Print the JSON report to stdout instead of the table.
    #[arg(long)]
    pub json: bool,
}

const LIST_KEYS: [&str; 7] = ["d", "x", "z", "tau", "grid-min", "grid-max", "grid-step"];
const SCALAR_KEYS: [&str; 9] = ["input", "output", "y", "level", "seed", "dgp", "reps", "n", "json"];

pub const DEFAULT_TAU: f64 = 0.5;
pub const DEFAULT_LEVEL: f64 = 0.95;
pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_REPS: usize = 200;
pub const DEFAULT_N: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSpec {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub step: Vec<f64>,
}

/// Fully resolved configuration; echoed verbatim in every report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: Command,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub y: Option<String>,
    pub d: Vec<String>,
    pub x: Vec<String>,
    pub z: Vec<String>,
    pub taus: Vec<f64>,
    pub grid: Option<GridSpec>,
    pub level: f64,
    pub seed: u64,
    pub dgp: Option<String>,
    pub reps: usize,
    pub n: usize,
    pub params: BTreeMap<String, String>,
    pub json: bool,
}

/// Parses the flat file format: one `key = value` per line, `#` comments,
/// list values comma separated, design parameters as `param.name = value`.
pub fn parse_config_text(text: &str) -> CliResult<BTreeMap<String, Vec<String>>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("config line {}: expected `key = value`", i + 1)))?;
        let key = key.trim().to_string();
        let value = value.trim();
        let known = LIST_KEYS.contains(&key.as_str()) || SCALAR_KEYS.contains(&key.as_str()) || key.starts_with("param.");
        if !known {
            return Err(CliError::Config(format!("config line {}: unknown key `{key}`", i + 1)));
        }
        let values = if LIST_KEYS.contains(&key.as_str()) {
            value.split(',').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect()
        } else {
            vec![value.to_string()]
        };
        if out.insert(key.clone(), values).is_some() {
            return Err(CliError::Config(format!("config line {}: key `{key}` set twice", i + 1)));
        }
    }
    Ok(out)
}

fn cli_layer(cli: &Cli) -> CliResult<BTreeMap<String, Vec<String>>> {
    let mut m = BTreeMap::new();
    let mut scalar = |k: &str, v: &Option<String>| {
        if let Some(v) = v {
            m.insert(k.to_string(), vec![v.clone()]);
        }
    };
    scalar("input", &cli.input);
    scalar("output", &cli.output);
    scalar("y", &cli.y);
    scalar("level", &cli.level);
    scalar("seed", &cli.seed);
    scalar("dgp", &cli.dgp);
    scalar("reps", &cli.reps);
    scalar("n", &cli.n);
    if cli.json {
        m.insert("json".into(), vec!["true".into()]);
    }
    for (k, v) in [
        ("d", &cli.d),
        ("x", &cli.x),
        ("z", &cli.z),
        ("tau", &cli.tau),
        ("grid-min", &cli.grid_min),
        ("grid-max", &cli.grid_max),
        ("grid-step", &cli.grid_step),
    ] {
        if !v.is_empty() {
            m.insert(k.to_string(), v.clone());
        }
    }
    for p in &cli.param {
        let (k, v) = p
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--param expects key=value, got `{p}`")))?;
        m.insert(format!("param.{}", k.trim()), vec![v.trim().to_string()]);
    }
    Ok(m)
}

fn parse_f64(key: &str, s: &str) -> CliResult<f64> {
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| CliError::Config(format!("`{key}` expects a finite number, got `{s}`")))
}

fn parse_usize(key: &str, s: &str) -> CliResult<usize> {
    s.parse::<usize>()
        .map_err(|_| CliError::Config(format!("`{key}` expects a non-negative integer, got `{s}`")))
}

impl RunConfig {
    /// Resolves the command line, reading `--config` if given.
    pub fn from_cli(cli: &Cli) -> CliResult<Self> {
        let file = match &cli.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
                parse_config_text(&text)?
            }
            None => BTreeMap::new(),
        };
        Self::from_layers(cli.command, file, cli_layer(cli)?)
    }

    /// Merges `file` under `cli` (command line wins key by key) and parses.
    pub fn from_layers(
        command: Command,
        file: BTreeMap<String, Vec<String>>,
        cli: BTreeMap<String, Vec<String>>,
    ) -> CliResult<Self> {
        let mut merged = file;
        merged.extend(cli);
        let scalar = |k: &str| merged.get(k).and_then(|v| v.first()).cloned();
        let list = |k: &str| merged.get(k).cloned().unwrap_or_default();

        let taus = list("tau").iter().map(|t| parse_f64("tau", t)).collect::<CliResult<Vec<_>>>()?;
        let taus = if taus.is_empty() { vec![DEFAULT_TAU] } else { taus };

        let grid_parts: Vec<Vec<f64>> = ["grid-min", "grid-max", "grid-step"]
            .iter()
            .map(|k| list(k).iter().map(|v| parse_f64(k, v)).collect())
            .collect::<CliResult<_>>()?;
        let grid = match grid_parts.iter().filter(|g| !g.is_empty()).count() {
            0 => None,
            3 => Some(GridSpec {
                min: grid_parts[0].clone(),
                max: grid_parts[1].clone(),
                step: grid_parts[2].clone(),
            }),
            _ => {
                return Err(CliError::Config(
                    "grid-min, grid-max and grid-step must be given together".into(),
                ))
            }
        };

        let params = merged
            .iter()
            .filter_map(|(k, v)| k.strip_prefix("param.").map(|p| (p.to_string(), v.join(","))))
            .collect();

        let config = RunConfig {
            command,
            input: scalar("input").map(PathBuf::from),
            output: scalar("output").map(PathBuf::from),
            y: scalar("y"),
            d: list("d"),
            x: list("x"),
            z: list("z"),
            taus,
            grid,
            level: scalar("level").map(|v| parse_f64("level", &v)).transpose()?.unwrap_or(DEFAULT_LEVEL),
            seed: scalar("seed")
                .map(|v| v.parse::<u64>().map_err(|_| CliError::Config(format!("`seed` expects an unsigned integer, got `{v}`"))))
                .transpose()?
                .unwrap_or(DEFAULT_SEED),
            dgp: scalar("dgp"),
            reps: scalar("reps").map(|v| parse_usize("reps", &v)).transpose()?.unwrap_or(DEFAULT_REPS),
            n: scalar("n").map(|v| parse_usize("n", &v)).transpose()?.unwrap_or(DEFAULT_N),
            params,
            json: scalar("json").is_some_and(|v| v == "true"),
        };
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> CliResult<()> {
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(CliError::Config(format!("level must lie in (0, 1), got {}", self.level)));
        }
        if let Some(t) = self.taus.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
            return Err(CliError::Config(format!("tau must lie in (0, 1), got {t}")));
        }
        if let Some(g) = &self.grid {
            if g.min.len() != g.max.len() || g.min.len() != g.step.len() {
                return Err(CliError::Config("grid-min, grid-max and grid-step need equal lengths".into()));
            }
            if g.step.iter().any(|s| *s <= 0.0) {
                return Err(CliError::Config("grid step must be positive".into()));
            }
            if g.min.iter().zip(&g.max).any(|(lo, hi)| hi < lo) {
                return Err(CliError::Config("grid-max must not be below grid-min".into()));
            }
            if !self.d.is_empty() && g.min.len() != self.d.len() {
                return Err(CliError::Config(format!(
                    "grid has {} dimensions but {} endogenous columns were given",
                    g.min.len(),
                    self.d.len()
                )));
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for c in self.y.iter().chain(&self.d).chain(&self.x).chain(&self.z) {
            if !seen.insert(c) {
                return Err(CliError::Config(format!("column `{c}` is given more than one role")));
            }
        }
        Ok(())
    }

    /// Column roles for the commands that read data.
    pub fn roles(&self) -> CliResult<RoleNames> {
        let y = self.y.clone().ok_or_else(|| CliError::Config("--y is required".into()))?;
        if self.d.is_empty() {
            return Err(CliError::Config("at least one --d is required".into()));
        }
        if self.z.is_empty() {
            return Err(CliError::Config("at least one --z is required".into()));
        }
        Ok(RoleNames {
            y,
            d: self.d.clone(),
            x: self.x.clone(),
            z: self.z.clone(),
        })
    }

    pub fn input_path(&self) -> CliResult<&Path> {
        self.input
            .as_deref()
            .ok_or_else(|| CliError::Config(format!("`{}` needs --input", self.command.name())))
    }

    /// Typed tuning parameter with a default.
    pub fn param_or<T: std::str::FromStr>(&self, key: &str, default: T) -> CliResult<T> {
        match self.params.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse::<T>()
                .map_err(|_| CliError::Config(format!("parameter `{key}` has an invalid value `{v}`"))),
        }
    }
}

/// Column names for each role.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RoleNames {
    pub y: String,
    pub d: Vec<String>,
    pub x: Vec<String>,
    pub z: Vec<String>,
}

impl RoleNames {
    pub fn all(&self) -> impl Iterator<Item = &String> {
        std::iter::once(&self.y).chain(&self.d).chain(&self.x).chain(&self.z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layer(pairs: &[(&str, &[&str])]) -> BTreeMap<String, Vec<String>> {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.iter().map(|s| s.to_string()).collect()))
            .collect()
    }

    #[test]
    fn command_line_overrides_file_overrides_defaults() {
        let file = parse_config_text("level = 0.9\nseed = 7 # comment\ntau = 0.25, 0.75\n").unwrap();
        let cli = layer(&[("seed", &["11"])]);
        let c = RunConfig::from_layers(Command::Ci, file, cli).unwrap();
        assert_eq!(c.level, 0.9);
        assert_eq!(c.seed, 11);
        assert_eq!(c.taus, vec![0.25, 0.75]);
        assert_eq!(c.reps, DEFAULT_REPS);
    }

    #[test]
    fn file_rejects_unknown_keys_and_malformed_lines() {
        assert!(matches!(parse_config_text("colour = red"), Err(CliError::Config(_))));
        assert!(matches!(parse_config_text("level 0.9"), Err(CliError::Config(_))));
        assert!(matches!(parse_config_text("n = 1\nn = 2"), Err(CliError::Config(_))));
        let p = parse_config_text("param.rho = 0.8").unwrap();
        assert_eq!(p["param.rho"], vec!["0.8"]);
    }

    #[test]
    fn invariants_are_enforced() {
        let bad = |pairs: &[(&str, &[&str])]| RunConfig::from_layers(Command::Estimate, BTreeMap::new(), layer(pairs));
        assert!(bad(&[("level", &["1.0"])]).is_err());
        assert!(bad(&[("tau", &["0"])]).is_err());
        assert!(bad(&[("grid-min", &["0"]), ("grid-max", &["1"]), ("grid-step", &["0"])]).is_err());
        assert!(bad(&[("grid-min", &["0"])]).is_err());
        assert!(bad(&[("y", &["a"]), ("d", &["a"])]).is_err());
        assert!(bad(&[("seed", &["-1"])]).is_err());
        assert!(bad(&[("tau", &["half"])]).is_err());
    }
}
