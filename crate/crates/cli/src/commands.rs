//! The five subcommands. Each returns a [`Report`]; writing it out is left to the caller.

use std::fs;
use std::path::{Path, PathBuf};

use ivqr_core::ident::{
    estimate_moment_system, global_univalence_check, identification_region_scan, local_rank_check, mlr_check,
    KernelBandwidth, ParameterPolytope, PermutationChoice, ScanGrid, DEFAULT_MIN_CELL,
};
use ivqr_core::ivqr::{
    build_profile, default_block_size, default_grid, estimate, robust_confidence_region, variance_by_subsampling,
    AlphaGrid, ConfidenceRegion, IqrProfile, LinearIvqrSpec,
};
use ivqr_core::{Error as CoreError, QuantileDataset};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;

use crate::config::{Command, RunConfig};
use crate::design::Design;
use crate::error::{CliError, CliResult};
use crate::io::{load_csv, role_names, write_csv};
use crate::report::{
    finite, DataSummary, EstimateBlock, GridSummary, IdentBlock, IdentVerdict, McBlock, McTauSummary, ProfilePoint,
    RegionBlock, Report, SimulationBlock, StdErrors,
};

/// Regions covering at least this share of the grid are flagged as weakly identified.
pub const WEAK_ID_FRACTION: f64 = 0.9;

/// Tuning parameters accepted by `--param` besides the design parameters.
pub const TUNING_KEYS: [&str; 9] = [
    "subsample_reps",
    "block_size",
    "min_cell",
    "ident_half_width",
    "ident_step",
    "scan_step",
    "scan_half_steps",
    "scan_epsilon",
    "threads",
];

const DEFAULT_SUBSAMPLE_REPS: usize = 100;
const MAX_SCAN_POINTS: usize = 2_000_000;

pub fn run(config: &RunConfig) -> CliResult<Report> {
    if !matches!(config.command, Command::Simulate | Command::Mc) {
        if let Some(k) = config.params.keys().find(|k| !TUNING_KEYS.contains(&k.as_str())) {
            return Err(CliError::Config(format!(
                "unknown parameter `{k}` for `{}` (expected one of: {})",
                config.command.name(),
                TUNING_KEYS.join(", ")
            )));
        }
    }
    match config.command {
        Command::Estimate => cmd_estimate(config),
        Command::Ci => cmd_ci(config),
        Command::Identify => cmd_identify(config),
        Command::Simulate => cmd_simulate(config),
        Command::Mc => cmd_mc(config),
    }
}

fn load(config: &RunConfig, report: &mut Report) -> CliResult<QuantileDataset> {
    let roles = config.roles()?;
    let path = config.input_path()?;
    let loaded = load_csv(path, &roles)?;
    if loaded.dropped_rows > 0 {
        report.warnings.push(format!(
            "{} of {} rows dropped for missing values in role columns",
            loaded.dropped_rows, loaded.rows_read
        ));
    }
    report.data = Some(DataSummary {
        path: path.display().to_string(),
        n: loaded.dataset.n(),
        rows_read: loaded.rows_read,
        dropped_rows: loaded.dropped_rows,
        y: roles.y,
        d: roles.d,
        x: roles.x,
        z: roles.z,
    });
    Ok(loaded.dataset)
}

fn resolve_grid(config: &RunConfig, data: &QuantileDataset, spec: &LinearIvqrSpec) -> CliResult<(AlphaGrid, &'static str)> {
    match &config.grid {
        Some(g) => {
            if g.min.len() != spec.endogenous.len() {
                return Err(CliError::Config(format!(
                    "grid has {} dimensions but there are {} endogenous columns",
                    g.min.len(),
                    spec.endogenous.len()
                )));
            }
            Ok((AlphaGrid::uniform(&g.min, &g.max, &g.step)?, "user"))
        }
        None => Ok((default_grid(data, spec)?, "default_2sls")),
    }
}

fn grid_summary(grid: &AlphaGrid, source: &'static str) -> GridSummary {
    GridSummary {
        source,
        min: grid.axes().iter().map(|a| a[0]).collect(),
        max: grid.axes().iter().map(|a| a[a.len() - 1]).collect(),
        points_per_axis: grid.axes().iter().map(Vec::len).collect(),
        points: grid.len(),
        resolution: grid.resolution(),
    }
}

fn tau_label(tau: f64) -> String {
    format!("tau={tau}")
}

/// Profile, estimate and grid for one quantile index.
fn profile_for(
    config: &RunConfig,
    data: &QuantileDataset,
    tau: f64,
) -> CliResult<(LinearIvqrSpec, AlphaGrid, &'static str, IqrProfile)> {
    let spec = LinearIvqrSpec::from_roles(data.roles(), tau);
    let (grid, source) = resolve_grid(config, data, &spec)?;
    let profile = build_profile(data, &spec, &grid)?;
    Ok((spec, grid, source, profile))
}

fn cmd_estimate(config: &RunConfig) -> CliResult<Report> {
    let mut report = Report::new(config);
    let data = load(config, &mut report)?;
    let reps: usize = config.param_or("subsample_reps", DEFAULT_SUBSAMPLE_REPS)?;
    let block: usize = config.param_or("block_size", default_block_size(data.n()))?;
    let names = data.names().to_vec();
    let roles = data.roles().clone();

    for (k, &tau) in config.taus.iter().enumerate() {
        let (spec, grid, source, profile) = profile_for(config, &data, tau)?;
        let est = estimate(&profile)?;
        if est.boundary_warning {
            report.warnings.push(format!(
                "{}: the Wald minimiser lies on the grid edge; the truth may lie outside the grid \
                 and subsampling standard errors are unreliable",
                tau_label(tau)
            ));
        }
        let base = format!("/estimates/{k}");
        let mut profile_points = Vec::with_capacity(grid.len());
        for i in 0..grid.len() {
            if profile.wald[i].is_none() {
                let reason = profile
                    .invalid
                    .iter()
                    .find(|p| p.index == i)
                    .map_or("invalid_grid_point".to_string(), |p| format!("invalid_grid_point: {}", p.reason));
                report.null(format!("{base}/profile/{i}/wald"), reason);
            }
            profile_points.push(ProfilePoint {
                alpha: grid.point(i),
                wald: profile.wald[i],
            });
        }

        let std_errors = if reps == 0 {
            report.null(format!("{base}/std_errors"), "disabled");
            None
        } else {
            match variance_by_subsampling(&data, &spec, &grid, block, reps, config.seed.wrapping_add(k as u64)) {
                Ok(sv) => {
                    let dims = spec.endogenous.len();
                    let mut se = |j: usize, field: &str, slot: usize| {
                        let v = finite(sv.std_errors[j]);
                        if v.is_none() {
                            report.null(format!("{base}/std_errors/{field}/{slot}"), "non_finite_subsample_variance");
                        }
                        v
                    };
                    let alpha = (0..dims).map(|j| se(j, "alpha", j)).collect();
                    let beta = (dims..sv.std_errors.len()).map(|j| se(j, "beta", j - dims)).collect();
                    Some(StdErrors {
                        alpha,
                        beta,
                        block_size: sv.block_size,
                        replications: sv.replications,
                        failed: sv.failed,
                    })
                }
                Err(e @ (CoreError::UnreliableVariance { .. } | CoreError::Domain(_))) => {
                    report.warnings.push(format!("{}: standard errors unavailable: {e}", tau_label(tau)));
                    report.null(format!("{base}/std_errors"), format!("subsampling_failed: {e}"));
                    None
                }
                Err(e) => return Err(e.into()),
            }
        };

        report.estimates.push(EstimateBlock {
            tau,
            alpha_names: roles.d.iter().map(|&j| names[j].clone()).collect(),
            alpha_hat: est.alpha_hat.clone(),
            beta_names: std::iter::once("(intercept)".to_string())
                .chain(roles.x.iter().map(|&j| names[j].clone()))
                .collect(),
            beta_hat: est.beta_hat.clone(),
            std_errors,
            wald_min: est.wald_min,
            argmin_index: est.argmin_index,
            boundary_warning: est.boundary_warning,
            local_minima: est.local_minima.clone(),
            grid: grid_summary(&grid, source),
            invalid_points: profile.invalid.len(),
            profile: profile_points,
        });
    }
    Ok(report)
}

/// Interval hulls of runs of consecutive grid indices (one-dimensional grids).
fn intervals(grid: &AlphaGrid, region: &ConfidenceRegion) -> Vec<[f64; 2]> {
    if grid.dims() != 1 || region.indices.is_empty() {
        return Vec::new();
    }
    let axis = &grid.axes()[0];
    let mut idx = region.indices.clone();
    idx.sort_unstable();
    let mut out = Vec::new();
    let mut start = idx[0];
    for w in idx.windows(2) {
        if w[1] != w[0] + 1 {
            out.push([axis[start], axis[w[0]]]);
            start = w[1];
        }
    }
    out.push([axis[start], axis[idx[idx.len() - 1]]]);
    out
}

fn cmd_ci(config: &RunConfig) -> CliResult<Report> {
    let mut report = Report::new(config);
    let data = load(config, &mut report)?;
    for &tau in &config.taus {
        let (_, grid, source, profile) = profile_for(config, &data, tau)?;
        let est = estimate(&profile)?;
        let region = robust_confidence_region(&profile, config.level)?;
        let weak = region.grid_fraction >= WEAK_ID_FRACTION;
        let touches = region.indices.iter().any(|&i| grid.is_edge(i));
        if weak {
            report.warnings.push(format!(
                "{}: the region covers {:.0}% of the grid; weak identification suspected",
                tau_label(tau),
                100.0 * region.grid_fraction
            ));
        } else if touches {
            report.warnings.push(format!(
                "{}: the region reaches the grid edge and may extend beyond the grid",
                tau_label(tau)
            ));
        }
        if region.is_empty() {
            report.warnings.push(format!(
                "{}: the region is empty at level {}; the model may be misspecified",
                tau_label(tau),
                config.level
            ));
        }
        report.regions.push(RegionBlock {
            tau,
            level: region.level,
            df: region.df,
            threshold: region.threshold,
            alpha_hat: est.alpha_hat.clone(),
            grid: grid_summary(&grid, source),
            intervals: intervals(&grid, &region),
            connected: region.is_connected(),
            points: region.points.clone(),
            grid_fraction: region.grid_fraction,
            components: region.components,
            volume: region.volume,
            touches_grid_edge: touches,
            weak_identification: weak,
        });
    }
    Ok(report)
}

fn cmd_identify(config: &RunConfig) -> CliResult<Report> {
    let mut report = Report::new(config);
    if config.d.len() != 1 || config.z.len() != 1 {
        return Err(CliError::Config("identify takes exactly one --d and one --z".into()));
    }
    if !config.x.is_empty() {
        return Err(CliError::Config("identify does not condition on covariates; drop --x".into()));
    }
    let data = load(config, &mut report)?;
    let min_cell: usize = config.param_or("min_cell", DEFAULT_MIN_CELL)?;
    let half_width: f64 = config.param_or("ident_half_width", 1.0)?;
    let step: f64 = config.param_or("ident_step", 0.1)?;
    let scan_step: f64 = config.param_or("scan_step", 0.05)?;
    let scan_half: usize = config.param_or("scan_half_steps", 20)?;
    let epsilon = config.params.get("scan_epsilon").map(|_| config.param_or("scan_epsilon", 0.0)).transpose()?;
    if !(half_width > 0.0 && step > 0.0 && scan_step > 0.0) {
        return Err(CliError::Config("ident_half_width, ident_step and scan_step must be positive".into()));
    }

    for &tau in &config.taus {
        let sys = estimate_moment_system(&data, tau, KernelBandwidth::Silverman, min_cell).map_err(|e| match e {
            CoreError::NotDiscrete { .. } => CliError::Data(format!("identify requires discrete D and Z: {e}")),
            other => other.into(),
        })?;

        // centre: the linear IV quantile fit evaluated at each treatment level
        let (_, _, _, profile) = profile_for(config, &data, tau)?;
        let est = estimate(&profile)?;
        let center: Vec<f64> = sys.d_support().iter().map(|d| est.beta_hat[0] + est.alpha_hat[0] * d).collect();

        let region = ParameterPolytope::Box {
            center: center.clone(),
            half_width,
        };
        let rank = local_rank_check(&sys, &center)?;
        let mlr = if sys.l() == 2 && sys.r() == 2 {
            Some(mlr_check(&sys, &region, step)?)
        } else {
            None
        };
        let univalence = global_univalence_check(&sys, &region, step, PermutationChoice::Search)?;

        let grid = ScanGrid::centered(&center, scan_half, scan_step);
        if grid.len()? > MAX_SCAN_POINTS {
            return Err(CliError::Config(format!(
                "identification scan would evaluate {} points (limit {MAX_SCAN_POINTS}); reduce scan_half_steps",
                grid.len()?
            )));
        }
        let scan = identification_region_scan(&sys, &grid, epsilon)?;

        let mut notes = Vec::new();
        if let Some(m) = &mlr {
            if m.rhs_identically_zero {
                notes.push(
                    "nobody is treated at the first instrument value: the primary likelihood-ratio \
                     cross-product inequality holds trivially"
                        .to_string(),
                );
            }
        }
        notes.push(format!(
            "scan kept {} of {} candidate points (epsilon {:.3e})",
            scan.points.len(),
            scan.grid_points,
            scan.epsilon
        ));

        let mlr_pass = mlr.as_ref().map(|m| m.primary.holds || m.swapped.holds);
        let verdict = IdentVerdict {
            local_rank: rank.pass,
            likelihood_ratio: mlr_pass,
            univalence: univalence.pass,
            all_pass: rank.pass && mlr_pass.unwrap_or(true) && univalence.pass,
        };
        report.identification.push(IdentBlock {
            tau,
            d_support: sys.d_support().to_vec(),
            z_support: sys.z_support().to_vec(),
            center,
            region: json!({ "shape": "box", "half_width": half_width, "grid_step": step }),
            local_rank: serde_json::to_value(&rank).expect("serialises"),
            likelihood_ratio: mlr.map(|m| serde_json::to_value(&m).expect("serialises")),
            univalence: serde_json::to_value(&univalence).expect("serialises"),
            scan: json!({
                "grid": grid,
                "epsilon": scan.epsilon,
                "grid_points": scan.grid_points,
                "points": scan.points,
                "diameter": scan.diameter(),
            }),
            verdict,
            notes,
        });
    }
    Ok(report)
}

/// `data.csv` -> `data.truth.json`.
pub fn truth_path(csv: &Path) -> PathBuf {
    csv.with_extension("truth.json")
}

fn design_of(config: &RunConfig) -> CliResult<(String, Design)> {
    let name = config
        .dgp
        .clone()
        .ok_or_else(|| CliError::Config(format!("`{}` needs --dgp", config.command.name())))?;
    let design = Design::from_config(&name, &config.params, &TUNING_KEYS)?;
    Ok((name, design))
}

fn cmd_simulate(config: &RunConfig) -> CliResult<Report> {
    let mut report = Report::new(config);
    let (name, design) = design_of(config)?;
    let csv = config
        .output
        .clone()
        .ok_or_else(|| CliError::Config("simulate needs --output for the CSV file".into()))?;
    let sim = design.simulate(config.n, config.seed)?;
    write_csv(&csv, &sim.data)?;
    let truth = truth_path(&csv);
    let sidecar = json!({
        "schema_version": crate::report::SCHEMA_VERSION,
        "dgp": name,
        "n": config.n,
        "seed": config.seed,
        "truth": sim.truth,
    });
    fs::write(&truth, serde_json::to_string_pretty(&sidecar).expect("serialises"))?;
    let roles = role_names(&sim.data);
    report.simulation = Some(SimulationBlock {
        dgp: name,
        n: config.n,
        seed: config.seed,
        csv: csv.display().to_string(),
        truth: truth.display().to_string(),
        columns: sim.data.names().to_vec(),
        y: roles.y,
        d: roles.d,
        x: roles.x,
        z: roles.z,
    });
    Ok(report)
}

/// Dataset seed of replication `r`: one ChaCha stream per replication.
pub fn replication_seed(seed: u64, r: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(r as u64 + 1);
    rng.next_u64()
}

struct RepOutcome {
    alpha: f64,
    covered: bool,
    volume: f64,
    weak: bool,
    boundary: bool,
}

fn one_replication(config: &RunConfig, design: &Design, r: usize) -> Vec<Result<RepOutcome, String>> {
    let sim = match design.simulate(config.n, replication_seed(config.seed, r)) {
        Ok(s) => s,
        Err(e) => return config.taus.iter().map(|_| Err(e.to_string())).collect(),
    };
    config
        .taus
        .iter()
        .map(|&tau| {
            let (_, grid, _, profile) = profile_for(config, &sim.data, tau).map_err(|e| e.to_string())?;
            let est = estimate(&profile).map_err(|e| e.to_string())?;
            let region = robust_confidence_region(&profile, config.level).map_err(|e| e.to_string())?;
            let truth = design.alpha(tau);
            let axis = &grid.axes()[0];
            let step = grid.resolution();
            let nearest = (0..axis.len())
                .min_by(|&a, &b| (axis[a] - truth).abs().total_cmp(&(axis[b] - truth).abs()))
                .expect("grid is nonempty");
            let on_grid = (axis[nearest] - truth).abs() <= 0.5 * step + 1e-12;
            Ok(RepOutcome {
                alpha: est.alpha_hat[0],
                covered: on_grid && region.contains_index(nearest),
                volume: region.volume,
                weak: region.grid_fraction >= WEAK_ID_FRACTION,
                boundary: est.boundary_warning,
            })
        })
        .collect()
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 0 {
        0.5 * (v[m - 1] + v[m])
    } else {
        v[m]
    }
}

fn cmd_mc(config: &RunConfig) -> CliResult<Report> {
    let mut report = Report::new(config);
    let (name, design) = design_of(config)?;
    if config.reps == 0 {
        return Err(CliError::Config("mc needs --reps of at least 1".into()));
    }
    let threads: usize = config.param_or("threads", 0)?;
    let work = || -> Vec<Vec<Result<RepOutcome, String>>> {
        (0..config.reps).into_par_iter().map(|r| one_replication(config, &design, r)).collect()
    };
    let outcomes = if threads == 0 {
        work()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| CliError::Io(e.to_string()))?
            .install(work)
    };

    let mut summaries = Vec::new();
    for (k, &tau) in config.taus.iter().enumerate() {
        let truth = design.alpha(tau);
        let ok: Vec<&RepOutcome> = outcomes.iter().filter_map(|o| o[k].as_ref().ok()).collect();
        let failures = config.reps - ok.len();
        if let Some(Err(first)) = outcomes.iter().map(|o| &o[k]).find(|o| o.is_err()) {
            report.warnings.push(format!(
                "{}: {failures} of {} replications failed (first: {first})",
                tau_label(tau),
                config.reps
            ));
        }
        let base = format!("/monte_carlo/summaries/{k}");
        let m = ok.len() as f64;
        let share = |f: &dyn Fn(&RepOutcome) -> bool| (!ok.is_empty()).then(|| ok.iter().filter(|o| f(o)).count() as f64 / m);
        let mut alphas: Vec<f64> = ok.iter().map(|o| o.alpha).collect();
        let summary = if ok.is_empty() {
            for field in [
                "mean/0",
                "bias/0",
                "median_bias/0",
                "mc_sd/0",
                "rmse/0",
                "coverage",
                "median_region_volume",
                "weak_identification_share",
                "boundary_share",
            ] {
                report.null(format!("{base}/{field}"), "no_successful_replications");
            }
            McTauSummary {
                tau,
                truth: vec![truth],
                replications: config.reps,
                failures,
                mean: vec![None],
                bias: vec![None],
                median_bias: vec![None],
                mc_sd: vec![None],
                rmse: vec![None],
                coverage: None,
                median_region_volume: None,
                weak_identification_share: None,
                boundary_share: None,
            }
        } else {
            let mean = alphas.iter().sum::<f64>() / m;
            let mc_sd = if ok.len() > 1 {
                finite((alphas.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt())
            } else {
                report.null(format!("{base}/mc_sd/0"), "too_few_replications");
                None
            };
            let rmse = (alphas.iter().map(|a| (a - truth).powi(2)).sum::<f64>() / m).sqrt();
            let mut volumes: Vec<f64> = ok.iter().map(|o| o.volume).collect();
            McTauSummary {
                tau,
                truth: vec![truth],
                replications: config.reps,
                failures,
                mean: vec![finite(mean)],
                bias: vec![finite(mean - truth)],
                median_bias: vec![finite(median(&mut alphas) - truth)],
                mc_sd: vec![mc_sd],
                rmse: vec![finite(rmse)],
                coverage: share(&|o| o.covered),
                median_region_volume: finite(median(&mut volumes)),
                weak_identification_share: share(&|o| o.weak),
                boundary_share: share(&|o| o.boundary),
            }
        };
        summaries.push(summary);
    }
    report.monte_carlo = Some(McBlock {
        dgp: name,
        n: config.n,
        replications: config.reps,
        level: config.level,
        summaries,
    });
    Ok(report)
}
